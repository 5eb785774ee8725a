"""Command-line interface.

Exit codes: 0 success, 1 estimation or input-data failure, 2 usage or
configuration failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
import warnings

from . import __version__, _backend
from .effect_size import (
    DEFAULT_ALPHA,
    Estimator,
    Family,
    GroupPair,
    GroupSummary,
    SmdMethod,
    estimate,
    sd_ratio,
    sd_ratio_flagged,
)
from .errors import ConfigError, DomainError, GeoSmdError
from .meta import (
    FOREST_FIELDS,
    compute_effects,
    forest_data,
    meta_result_dict,
    parse_studies,
    pool_by_subgroup,
    write_forest_csv,
    write_forest_json,
)
from .numerics import bias_factor_approx, bias_factor_exact
from .simulate import SWEEP_COLUMNS, load_config, seed_from_env, sweep, write_sweep_csv

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
NU_CEILING = 1e6


class UsageError(Exception):
    """Invalid flag values detected after argument parsing."""


def _finite_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"not finite: {text!r}")
    return value


def _count(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    return value


def _fmt(value, precision):
    if value is None:
        return "NA"
    if isinstance(value, float):
        return repr(value) if precision is None else f"{value:.{precision}g}"
    return str(value)


def _emit_table(rows, columns, fmt, precision, fh):
    """Render ``rows`` (dicts) as text, csv or json."""
    if fmt == "structured":
        json.dump(rows, fh, indent=2)
        fh.write("\n")
        return
    cells = [[_fmt(r[c], precision) for c in columns] for r in rows]
    if fmt == "csv":
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(cells)
        return
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    fh.write("  ".join(c.rjust(wd) for c, wd in zip(columns, widths)).rstrip() + "\n")
    for row in cells:
        fh.write("  ".join(v.rjust(wd) for v, wd in zip(row, widths)).rstrip() + "\n")


def _emit_record(record, fmt, precision, fh):
    """Render one flat mapping as ``key: value`` lines, a one-row csv, or json."""
    if fmt == "structured":
        json.dump(record, fh, indent=2)
        fh.write("\n")
    elif fmt == "csv":
        _emit_table([record], list(record), "csv", precision, fh)
    else:
        width = max(len(k) for k in record)
        for key, value in record.items():
            fh.write(f"{key.ljust(width)}  {_fmt(value, precision)}\n")


def _method_from(args):
    try:
        return SmdMethod(args.family, args.estimator, args.w)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _add_method_flags(p, default_family="geometric"):
    p.add_argument("--family", choices=[f.value for f in Family], default=default_family,
                   help="estimand family (default: %(default)s)")
    p.add_argument("--estimator", choices=[e.value for e in Estimator], default="hedges",
                   help="cohen (plug-in) or hedges (bias-corrected) (default: %(default)s)")
    p.add_argument("--w", type=_finite_float, default=0.5,
                   help="weight on the case arm; glass needs 0 (control sd) or 1 (case sd) (default: %(default)s)")
    p.add_argument("--alpha", type=_finite_float, default=DEFAULT_ALPHA,
                   help="interval level is 1 - alpha (default: %(default)s)")


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise UsageError(f"--alpha must lie in (0, 1), got {alpha!r}")


# ---------------------------------------------------------------------------
# effect


def cmd_effect(args, out):
    method = _method_from(args)
    _check_alpha(args.alpha)
    try:
        pair = GroupPair(GroupSummary(args.n1, args.mean1, args.sd1), GroupSummary(args.n0, args.mean0, args.sd0))
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    est = estimate(pair, method, args.alpha)
    ratio = sd_ratio(pair)
    record = {
        "method": method.label,
        "point": est.point,
        "se": est.se,
        "ci_low": est.ci_low,
        "ci_high": est.ci_high,
        "alpha": est.alpha,
        "sd_ratio": ratio,
        "sd_ratio_flagged": sd_ratio_flagged(pair),
    }
    _emit_record(record, args.format, args.precision, out)
    if record["sd_ratio_flagged"]:
        print(f"warning: sd ratio case/control = {ratio:.3g} is outside [0.5, 2]", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bias-table

BIAS_COLUMNS = ("nu", "w", "exact", "approx", "abs_error")


def cmd_bias_table(args, out):
    ws = args.w
    for w in ws:
        if not 0.0 <= w <= 1.0:
            raise UsageError(f"--w values must lie in [0, 1], got {w!r}")
    if args.nu_step <= 0:
        raise UsageError("--nu-step must be positive")
    if not (args.nu_min > max(ws) and args.nu_min >= 1.0 and args.nu_max <= NU_CEILING
            and args.nu_min <= args.nu_max):
        raise UsageError(
            f"nu range must satisfy max(w) < nu-min <= nu-max <= {NU_CEILING:g} and nu-min >= 1, "
            f"got [{args.nu_min:g}, {args.nu_max:g}] with max(w) = {max(ws):g}"
        )
    count = int(math.floor((args.nu_max - args.nu_min) / args.nu_step + 1e-9)) + 1
    rows = []
    for w in ws:
        for i in range(count):
            nu = args.nu_min + i * args.nu_step
            exact = bias_factor_exact(nu, w)
            approx = bias_factor_approx(nu, w)
            rows.append({"nu": nu, "w": w, "exact": exact, "approx": approx, "abs_error": abs(exact - approx)})
    _write_export(rows, BIAS_COLUMNS, args, out)
    return EXIT_OK


def _write_export(rows, columns, args, out):
    """Print ``rows`` to stdout in ``--format``, or save them to ``--output`` (csv, or json if structured)."""
    if args.output:
        fmt = "structured" if args.format == "structured" else "csv"
        # files keep full precision, like the meta and simulate exports
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            _emit_table(rows, columns, fmt, None, fh)
    else:
        _emit_table(rows, columns, args.format, args.precision, out)


# ---------------------------------------------------------------------------
# meta


def cmd_meta(args, out):
    method = _method_from(args)
    _check_alpha(args.alpha)
    try:
        with open(args.input, newline="", encoding="utf-8-sig") as fh:
            studies = parse_studies(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        effects = compute_effects(studies, method, args.alpha)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    results = pool_by_subgroup(studies, effects, args.alpha)
    overall = results[None]
    rows = forest_data(effects, overall)

    summaries = []
    for name, res in results.items():
        rec = {"subgroup": "overall" if name is None else name}
        rec.update(meta_result_dict(res))
        summaries.append(rec)
    summary_cols = list(summaries[0])
    if args.format == "structured":
        doc = {"results": summaries}
        if not args.output:
            doc["forest"] = rows
        json.dump(doc, out, indent=2)
        out.write("\n")
    else:
        _emit_table(summaries, summary_cols, args.format, args.precision, out)
        if not args.output:
            out.write("\n")
            _emit_table(rows, FOREST_FIELDS, args.format, args.precision, out)
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            if args.format == "structured":
                write_forest_json(rows, fh, overall)
            else:
                write_forest_csv(rows, fh)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args, out):
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    if args.replicates is not None and args.replicates < 1:
        raise UsageError("--replicates must be at least 1")
    if args.backend and args.backend not in _backend.AVAILABLE:
        raise UsageError(f"backend {args.backend!r} is not available (have: {', '.join(_backend.AVAILABLE)})")
    # precedence: --seed, then the config's master_seed, then GEOSMD_SEED, then the built-in default
    scenarios = load_config(args.config, seed=seed_from_env())
    overrides = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        overrides["master_seed"] = args.seed
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if overrides:
        import dataclasses

        scenarios = [dataclasses.replace(sc, **overrides) for sc in scenarios]
    t0 = time.perf_counter()
    rows = sweep(scenarios, workers=args.workers, backend=args.backend)
    elapsed = time.perf_counter() - t0
    total = sum(sc.replicates for sc in scenarios)
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            if args.format == "structured":
                json.dump(rows, fh, indent=2)
                fh.write("\n")
            else:
                write_sweep_csv(rows, fh)
    elif args.format == "text":
        _emit_table(rows, SWEEP_COLUMNS, "text", args.precision, out)
    elif args.format == "csv":
        write_sweep_csv(rows, out)
    else:
        json.dump(rows, out, indent=2)
        out.write("\n")
    print(
        f"simulated {len(scenarios)} scenario(s), {total} replicates, {len(rows)} rows "
        f"in {elapsed:.2f} s ({_backend.get(args.backend).BACKEND} kernels, {args.workers} worker(s))",
        file=sys.stderr,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------


def _common(p):
    p.add_argument("--format", choices=["text", "csv", "structured"], default="text",
                   help="output format; structured is JSON (default: %(default)s)")
    p.add_argument("--precision", type=_count, default=6, help="significant digits (default: %(default)s)")


def build_parser():
    parser = argparse.ArgumentParser(prog="geosmd", description="Standardized mean differences under unequal variances.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("effect", help="estimate one SMD from two arms' summaries")
    for arm in ("1", "0"):
        who = "case" if arm == "1" else "control"
        p.add_argument(f"--n{arm}", type=_count, required=True, help=f"{who} sample size")
        p.add_argument(f"--mean{arm}", type=_finite_float, required=True, help=f"{who} mean")
        p.add_argument(f"--sd{arm}", type=_finite_float, required=True, help=f"{who} standard deviation")
    _add_method_flags(p)
    _common(p)
    p.set_defaults(func=cmd_effect)

    p = sub.add_parser("bias-table", help="tabulate the exact bias factor against its approximation")
    p.add_argument("--nu-min", type=_finite_float, default=1.0, help="smallest nu (default: %(default)s)")
    p.add_argument("--nu-max", type=_finite_float, default=30.0, help="largest nu (default: %(default)s)")
    p.add_argument("--nu-step", type=_finite_float, default=1.0, help="nu increment (default: %(default)s)")
    p.add_argument("--w", type=_finite_float, nargs="+", default=[0.5], help="one or more weights (default: 0.5)")
    p.add_argument("--output", help="write the table to this file instead of stdout")
    _common(p)
    p.set_defaults(func=cmd_bias_table)

    p = sub.add_parser("meta", help="random-effects meta-analysis of a study table")
    p.add_argument("--input", required=True, help="comma-separated study table")
    _add_method_flags(p)
    p.add_argument("--output", help="write forest-plot data here (csv, or json with --format structured)")
    _common(p)
    p.set_defaults(func=cmd_meta)

    p = sub.add_parser("simulate", help="run a Monte Carlo scenario grid")
    p.add_argument("--config", required=True, help="YAML scenario grid")
    p.add_argument("--output", help="write the metrics table here (csv, or json with --format structured)")
    p.add_argument("--workers", type=_count, default=1, help="worker processes (default: %(default)s)")
    p.add_argument("--seed", type=_count, help="master seed; overrides the config and GEOSMD_SEED")
    p.add_argument("--replicates", type=_count, help="override every scenario's replicate count")
    p.add_argument("--backend", choices=["compiled", "python"], help="kernel implementation (default: auto)")
    _common(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.precision < 1 or args.precision > 17:
        parser.error("--precision must be between 1 and 17")
    buf = io.StringIO()
    try:
        code = args.func(args, buf)
    except (UsageError, ConfigError) as exc:
        print(f"geosmd {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GeoSmdError as exc:
        print(f"geosmd {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    sys.stdout.write(buf.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())
