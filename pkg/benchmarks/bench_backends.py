"""Compare the compiled kernels with the pure-Python fallback.

    python benchmarks/bench_backends.py [--repeat 3] [--quick]

Prints one line per kernel with the best-of-N wall time for each backend
and the speed-up.
"""

import argparse
import math
import time

import numpy as np

from geosmd import _backend
from geosmd.simulate import SimulationScenario, run_scenario


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(quick):
    reps = 20_000 if quick else 100_000
    rng = np.random.default_rng(1)
    df = rng.uniform(5, 60, 2_000 if quick else 10_000)
    nc = rng.uniform(-8, 8, df.size)
    nus = np.linspace(2.0, 500.0, 20_000)
    scenario = SimulationScenario(10, 10, var1=4.0, replicates=reps // 5,
                                  estimators=("pooled-hedges", "arithmetic-hedges", "geometric-hedges"))
    return [
        (f"arm_summaries ({reps} x 30 draws)",
         lambda k: k.arm_summaries(7, 0, 2, 0, reps, 30, 0.0, 1.0)),
        (f"standard_normals ({reps * 10})",
         lambda k: k.standard_normals(7, 3, 0, reps * 10)),
        (f"nct_quantile_array ({df.size})",
         lambda k: k.nct_quantile_array(0.975, df, nc)),
        (f"bias_factor_array ({nus.size})",
         lambda k: k.bias_factor_array(nus, 0.5)),
        (f"run_scenario ({scenario.replicates} reps, 3 estimators)",
         lambda k: run_scenario(scenario, backend=k.BACKEND)),
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--quick", action="store_true", help="smaller inputs")
    args = parser.parse_args(argv)

    if "compiled" not in _backend.AVAILABLE:
        raise SystemExit("compiled kernels are not built; run `python setup.py build_ext --inplace`")
    fast, slow = _backend.get("compiled"), _backend.get("python")
    print(f"{'kernel':<48} {'compiled':>10} {'python':>10} {'speed-up':>9}")
    for name, fn in cases(args.quick):
        t_fast = best_of(lambda: fn(fast), args.repeat)
        t_slow = best_of(lambda: fn(slow), args.repeat)
        ratio = t_slow / t_fast if t_fast > 0 else math.inf
        print(f"{name:<48} {t_fast:>9.4f}s {t_slow:>9.4f}s {ratio:>8.1f}x")


if __name__ == "__main__":
    main()
