"""Monte Carlo harness for bias, MSE and interval coverage of SMD estimators.

Replicate ``r`` draws the case arm from stream ``2r`` and the control arm
from stream ``2r + 1`` of the scenario's master seed. Replicates are grouped
into fixed blocks of ``BLOCK_SIZE`` by index; each block reduces to exactly
rounded power sums and the blocks are combined in index order, so the output
does not depend on how blocks are scheduled across workers.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _backend
from .effect_size import (
    DEFAULT_ALPHA,
    Estimator,
    Family,
    PopulationParams,
    SmdMethod,
    _family_arrays,
    check_sample_sizes,
    true_smd,
)
from .errors import ConfigError, DomainError, GeoSmdError

__all__ = [
    "BLOCK_SIZE",
    "DEFAULT_ESTIMATORS",
    "DEFAULT_SEED",
    "SWEEP_COLUMNS",
    "EstimatorMetrics",
    "SimulationMetrics",
    "SimulationScenario",
    "expand_config",
    "format_estimator",
    "load_config",
    "parse_estimator",
    "run_scenario",
    "sweep",
    "write_sweep_csv",
]

BLOCK_SIZE = 8192
DEFAULT_SEED = 20240517
REL_TRUTH_FLOOR = 1e-9
TARGETS = ("geometric", "arithmetic", "native")
_UINT64_MAX = 2**64 - 1

SWEEP_COLUMNS = (
    "scenario", "n1", "n0", "mu1", "mu0", "var1", "var0", "u", "w", "replicates", "master_seed",
    "target_family", "alpha", "estimator", "truth", "mean", "bias", "mse", "variance", "rel_bias",
    "rel_mse", "coverage", "mc_se_of_mean", "mc_se_of_variance", "ci_failures",
)

_FAMILY_ORDER = {f: i for i, f in enumerate(Family)}
_ESTIMATOR_ORDER = {e: i for i, e in enumerate(Estimator)}


def parse_estimator(text, default_w=0.5) -> SmdMethod:
    """Parse ``family-estimator`` with an optional ``:w`` suffix, e.g. ``glass-hedges:1``."""
    name, _, w_text = str(text).strip().lower().partition(":")
    fam, sep, est = name.partition("-")
    if not sep:
        raise DomainError(f"estimator must look like 'family-estimator', got {text!r}")
    w = float(w_text) if w_text else default_w
    if Family(fam) is Family.GLASS and not w_text and w not in (0.0, 1.0):
        w = 0.0
    return SmdMethod(fam, est, w)


def format_estimator(method: SmdMethod) -> str:
    if method.family is Family.POOLED:
        return f"pooled-{method.estimator.value}"
    return f"{method.family.value}-{method.estimator.value}:{method.w:g}"


def _estimator_key(method):
    return (_FAMILY_ORDER[method.family], _ESTIMATOR_ORDER[method.estimator], method.w)


DEFAULT_ESTIMATORS = ("pooled-cohen", "pooled-hedges", "geometric-cohen", "geometric-hedges")


@dataclass(frozen=True)
class SimulationScenario:
    """One Monte Carlo cell.

    ``target_family`` picks the estimand every estimator is scored against:
    ``geometric`` or ``arithmetic`` at the scenario's ``w``, or ``native`` to
    score each estimator against its own family's estimand.
    """

    n1: int
    n0: int
    mu1: float = 2.0
    mu0: float = 0.0
    var1: float = 1.0
    var0: float = 1.0
    w: float = 0.5
    replicates: int = 100_000
    master_seed: int = DEFAULT_SEED
    estimators: tuple = DEFAULT_ESTIMATORS
    target_family: str = "geometric"
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        for name in ("n1", "n0", "replicates", "master_seed"):
            value = getattr(self, name)
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {value!r}", key=name)
            object.__setattr__(self, name, int(value))
        if self.n1 < 2 or self.n0 < 2:
            raise ConfigError("sample sizes must be at least 2", key="n1" if self.n1 < 2 else "n0")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be at least 1, got {self.replicates}", key="replicates")
        if not 0 <= self.master_seed <= _UINT64_MAX:
            raise ConfigError("master_seed must be an unsigned 64-bit integer", key="master_seed")
        for name in ("mu1", "mu0", "var1", "var0", "w", "alpha"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value!r}", key=name)
            object.__setattr__(self, name, value)
        for name in ("var1", "var0"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}", key=name)
        if not 0.0 <= self.w <= 1.0:
            raise ConfigError(f"w must lie in [0, 1], got {self.w!r}", key="w")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha!r}", key="alpha")
        if self.target_family not in TARGETS:
            raise ConfigError(f"target_family must be one of {', '.join(TARGETS)}, got {self.target_family!r}",
                              key="target_family")
        ests = self.estimators
        if isinstance(ests, (str, SmdMethod)):
            ests = (ests,)
        methods = []
        for e in ests:
            try:
                methods.append(e if isinstance(e, SmdMethod) else parse_estimator(e, self.w))
            except (GeoSmdError, ValueError) as exc:
                raise ConfigError(f"invalid estimator {e!r}: {exc}", key="estimators") from None
        if not methods:
            raise ConfigError("at least one estimator is required", key="estimators")
        unique = sorted(set(methods), key=_estimator_key)
        object.__setattr__(self, "estimators", tuple(unique))
        for m in unique:
            try:
                check_sample_sizes(m, self.n1, self.n0)
                self.truth(m)
            except GeoSmdError as exc:
                raise ConfigError(f"{m.label}: {exc}", key="estimators") from None

    @property
    def params(self):
        return PopulationParams(self.mu1, self.mu0, self.var1, self.var0)

    @property
    def u(self):
        return math.log2(self.var1 / self.var0)

    def truth(self, method: SmdMethod) -> float:
        if self.target_family == "native":
            return true_smd(self.params, method)
        return true_smd(self.params, SmdMethod(self.target_family, Estimator.COHEN, self.w))


@dataclass(frozen=True)
class EstimatorMetrics:
    method: SmdMethod
    truth: float
    mean: float
    bias: float
    mse: float
    variance: float
    coverage: float
    rel_bias: Optional[float]
    rel_mse: Optional[float]
    mc_se_of_mean: float
    mc_se_of_variance: float
    ci_failures: int
    replicates: int

    @property
    def label(self):
        return format_estimator(self.method)


@dataclass(frozen=True)
class SimulationMetrics:
    scenario: SimulationScenario
    estimators: tuple = field(default_factory=tuple)

    def __getitem__(self, key):
        if isinstance(key, str):
            key = parse_estimator(key, self.scenario.w)
        for m in self.estimators:
            if m.method == key:
                return m
        raise KeyError(key)


# ---------------------------------------------------------------------------
# Block kernel (runs in worker processes)


def _run_block(args):
    scenario, block, backend = args
    kern = _backend.get(backend)
    start = block * BLOCK_SIZE
    count = min(BLOCK_SIZE, scenario.replicates - start)
    s = scenario
    m1, sd1 = kern.arm_summaries(s.master_seed, 0, 2, start, count, s.n1, s.mu1, math.sqrt(s.var1))
    m0, sd0 = kern.arm_summaries(s.master_seed, 1, 2, start, count, s.n0, s.mu0, math.sqrt(s.var0))
    diff = m1 - m0
    out = []
    for method in s.estimators:
        truth = s.truth(method)
        point, _, lo, hi = _family_arrays(method, s.n1, s.n0, diff, sd1, sd0, s.alpha, kern)
        err = point - truth
        err2 = err * err
        ok = np.isfinite(lo) & np.isfinite(hi)
        covered = int(np.count_nonzero(ok & (lo <= truth) & (truth <= hi)))
        out.append((
            math.fsum(err), math.fsum(err2), math.fsum(err2 * err), math.fsum(err2 * err2),
            covered, int(count - np.count_nonzero(ok)),
        ))
    return out


def _metrics(method, truth, sums, n):
    s1, s2, s3, s4, covered, failures = sums
    bias = s1 / n
    # guard the Cauchy-Schwarz bound against rounding when every estimate is equal
    mse = max(s2 / n, bias * bias)
    mu2 = mse - bias * bias
    mu4 = s4 / n - 4.0 * bias * s3 / n + 6.0 * bias * bias * s2 / n - 3.0 * bias**4
    sample_var = mu2 * n / (n - 1) if n > 1 else 0.0
    valid = n - failures
    rel = abs(truth) > REL_TRUTH_FLOOR
    return EstimatorMetrics(
        method=method,
        truth=truth,
        mean=truth + bias,
        bias=bias,
        mse=mse,
        variance=sample_var,
        coverage=covered / valid if valid else math.nan,
        rel_bias=bias / truth if rel else None,
        rel_mse=mse / (truth * truth) if rel else None,
        mc_se_of_mean=math.sqrt(sample_var / n),
        mc_se_of_variance=math.sqrt(max(mu4 - mu2 * mu2, 0.0) / n),
        ci_failures=failures,
        replicates=n,
    )


def run_scenario(scenario: SimulationScenario, workers: int = 1, backend: Optional[str] = None) -> SimulationMetrics:
    """Simulate ``scenario`` and summarize every requested estimator.

    ``workers > 1`` spreads blocks over a process pool; results are bitwise
    identical for any worker count. ``backend`` selects the kernel
    implementation ("compiled" or "python"); the default follows import-time
    selection.
    """
    if workers < 1:
        raise DomainError(f"workers must be at least 1, got {workers}")
    n_blocks = -(-scenario.replicates // BLOCK_SIZE)
    tasks = [(scenario, b, backend) for b in range(n_blocks)]
    if workers == 1 or n_blocks == 1:
        blocks = [_run_block(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, n_blocks)) as pool:
            blocks = list(pool.map(_run_block, tasks))
    per_est = []
    for i, method in enumerate(scenario.estimators):
        parts = [blk[i] for blk in blocks]
        sums = tuple(math.fsum(p[j] for p in parts) for j in range(4)) + (
            sum(p[4] for p in parts), sum(p[5] for p in parts))
        per_est.append(_metrics(method, scenario.truth(method), sums, scenario.replicates))
    return SimulationMetrics(scenario, tuple(per_est))


# ---------------------------------------------------------------------------
# Grids and configuration


def sweep(grid: Sequence[SimulationScenario], workers: int = 1, backend: Optional[str] = None) -> list:
    """Run every scenario; one row per (scenario, estimator) keyed by ``SWEEP_COLUMNS``."""
    if not grid:
        raise ConfigError("the scenario grid is empty")
    for i, sc in enumerate(grid):
        if not isinstance(sc, SimulationScenario):
            raise ConfigError(f"grid entry {i} is not a scenario", index=i)
    rows = []
    for i, sc in enumerate(grid):
        result = run_scenario(sc, workers=workers, backend=backend)
        for m in result.estimators:
            rows.append({
                "scenario": i,
                "n1": sc.n1,
                "n0": sc.n0,
                "mu1": sc.mu1,
                "mu0": sc.mu0,
                "var1": sc.var1,
                "var0": sc.var0,
                "u": sc.u,
                "w": sc.w,
                "replicates": sc.replicates,
                "master_seed": sc.master_seed,
                "target_family": sc.target_family,
                "alpha": sc.alpha,
                "estimator": m.label,
                "truth": m.truth,
                "mean": m.mean,
                "bias": m.bias,
                "mse": m.mse,
                "variance": m.variance,
                "rel_bias": m.rel_bias,
                "rel_mse": m.rel_mse,
                "coverage": m.coverage,
                "mc_se_of_mean": m.mc_se_of_mean,
                "mc_se_of_variance": m.mc_se_of_variance,
                "ci_failures": m.ci_failures,
            })
    return rows


def _format_cell(value, precision):
    if value is None:
        return "NA"
    if isinstance(value, float):
        return repr(value) if precision is None else f"{value:.{precision}g}"
    return str(value)


def write_sweep_csv(rows, fh, precision=None):
    """Write sweep rows in ``SWEEP_COLUMNS`` order; undefined relative metrics are written as NA.

    Floats are written in shortest round-trip form unless ``precision`` is given.
    """
    fh.write(",".join(SWEEP_COLUMNS) + "\n")
    for row in rows:
        fh.write(",".join(_format_cell(row[c], precision) for c in SWEEP_COLUMNS) + "\n")


CONFIG_KEYS = ("n", "n1", "n0", "mu1", "mu0", "var1", "var0", "u", "w", "replicates", "master_seed",
               "estimators", "target_family", "alpha")
_INT_KEYS = {"n", "n1", "n0", "replicates", "master_seed"}
_FLOAT_KEYS = {"mu1", "mu0", "var1", "var0", "u", "w", "alpha"}


def _coerce(key, value, index):
    if key in _INT_KEYS:
        try:
            number = float(value) if isinstance(value, str) else value
            if isinstance(number, bool) or not float(number).is_integer():
                raise ValueError
            return int(number)
        except (TypeError, ValueError):
            raise ConfigError(f"expected an integer, got {value!r}", key=key, index=index) from None
    if key in _FLOAT_KEYS:
        try:
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"expected a number, got {value!r}", key=key, index=index) from None
    if key == "estimators":
        if isinstance(value, str):
            return (value,)
        if not isinstance(value, (list, tuple)):
            raise ConfigError("expected a list of estimator names", key=key, index=index)
        return tuple(str(v) for v in value)
    return str(value)


def _scenario_from(values, index, seed):
    v = dict(values)
    if "n" in v:
        if "n1" in v or "n0" in v:
            raise ConfigError("give either n or n1/n0, not both", key="n", index=index)
        v["n1"] = v["n0"] = v.pop("n")
    if "u" in v:
        if "var1" in v:
            raise ConfigError("give either u or var1, not both", key="u", index=index)
        v["var1"] = v.get("var0", 1.0) * 2.0 ** v.pop("u")
    v.setdefault("master_seed", seed)
    for key in ("n1", "n0"):
        if key not in v:
            raise ConfigError("sample size is required", key=key, index=index)
    try:
        return SimulationScenario(**v)
    except ConfigError as exc:
        raise ConfigError(exc.message, key=exc.key, index=index) from None


def expand_config(doc, seed: int = DEFAULT_SEED) -> list:
    """Expand a configuration mapping into scenarios.

    The document is either a flat mapping or has ``defaults`` plus a ``grid``
    list of mappings. Inside a mapping every list-valued key except
    ``estimators`` is a grid axis; axes are crossed in document order with the
    last one varying fastest. ``seed`` fills in a missing ``master_seed``.
    """
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    if "grid" in doc or "defaults" in doc:
        extra = set(doc) - {"grid", "defaults"}
        if extra:
            raise ConfigError(f"unknown top-level key {sorted(extra)[0]!r}", key=sorted(extra)[0])
        defaults = doc.get("defaults") or {}
        blocks = doc.get("grid") or [{}]
        if not isinstance(blocks, list):
            raise ConfigError("grid must be a list of mappings", key="grid")
    else:
        defaults, blocks = {}, [doc]
    if not isinstance(defaults, dict):
        raise ConfigError("defaults must be a mapping", key="defaults")

    scenarios = []
    for block in blocks:
        if not isinstance(block, dict):
            raise ConfigError("grid entries must be mappings", key="grid", index=len(scenarios))
        merged = dict(defaults)
        merged.update(block)
        for key in merged:
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown key {key!r}", key=key, index=len(scenarios))
        axes = []
        for key, value in merged.items():
            if key != "estimators" and isinstance(value, list):
                if not value:
                    raise ConfigError("grid axis is empty", key=key, index=len(scenarios))
                axes.append((key, value))
            else:
                axes.append((key, [value]))
        for combo in itertools.product(*(vals for _, vals in axes)):
            index = len(scenarios)
            values = {key: _coerce(key, val, index) for (key, _), val in zip(axes, combo)}
            scenarios.append(_scenario_from(values, index, seed))
    if not scenarios:
        raise ConfigError("the configuration defines no scenarios")
    return scenarios


def load_config(path, seed: Optional[int] = None) -> list:
    """Read a YAML scenario file; see ``expand_config`` for the layout."""
    import yaml

    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    return expand_config(doc, DEFAULT_SEED if seed is None else seed)


def seed_from_env(default=DEFAULT_SEED) -> int:
    """Default master seed, overridable by the ``GEOSMD_SEED`` environment variable."""
    raw = os.environ.get("GEOSMD_SEED")
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw.strip(), 0)
    except ValueError:
        raise ConfigError(f"GEOSMD_SEED must be an integer, got {raw!r}", key="GEOSMD_SEED") from None
    if not 0 <= value <= _UINT64_MAX:
        raise ConfigError("GEOSMD_SEED must be an unsigned 64-bit integer", key="GEOSMD_SEED")
    return value
