"""Study ingestion and DerSimonian-Laird random-effects pooling."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

from .effect_size import (
    DEFAULT_ALPHA,
    EffectEstimate,
    GroupPair,
    GroupSummary,
    SmdMethod,
    estimate,
    sd_ratio,
    sd_ratio_flagged,
)
from .errors import DomainError, GeoSmdError, InsufficientStudies, StudyEstimationError, StudyParseError
from .numerics import normal_cdf, normal_quantile

__all__ = [
    "FOREST_FIELDS",
    "REQUIRED_COLUMNS",
    "MetaResult",
    "SdRatioWarning",
    "StudyRecord",
    "compute_effects",
    "forest_data",
    "parse_studies",
    "pool_by_subgroup",
    "pool_random_effects",
    "write_forest_csv",
    "write_forest_json",
]

REQUIRED_COLUMNS = ("study_id", "n_case", "mean_case", "sd_case", "n_control", "mean_control", "sd_control")
FOREST_FIELDS = ("study_id", "point", "ci_low", "ci_high", "weight_pct")
SUMMARY_ID = "RE summary"


class SdRatioWarning(UserWarning):
    """A study's case/control sd ratio lies outside [0.5, 2]."""


@dataclass(frozen=True)
class StudyRecord:
    study_id: str
    case: GroupSummary
    control: GroupSummary
    subgroup: Optional[str] = None

    @property
    def pair(self):
        return GroupPair(self.case, self.control)


@dataclass(frozen=True)
class MetaResult:
    pooled: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    tau2: float
    q_stat: float
    i2: float
    k: int
    method: Optional[SmdMethod] = None
    alpha: float = DEFAULT_ALPHA
    weights: tuple = ()


# ---------------------------------------------------------------------------
# Parsing


def _parse_number(raw, row, field, integer=False):
    text = (raw or "").strip()
    if not text:
        raise StudyParseError("missing value", row=row, field=field)
    try:
        # float() accepts only '.' as the decimal mark, independent of locale
        value = float(text)
    except ValueError:
        raise StudyParseError(f"not a number: {text!r}", row=row, field=field) from None
    if not math.isfinite(value):
        raise StudyParseError(f"not finite: {text!r}", row=row, field=field)
    if integer:
        if not value.is_integer():
            raise StudyParseError(f"not an integer: {text!r}", row=row, field=field)
        value = int(value)
        if value < 2:
            raise StudyParseError(f"sample size must be at least 2, got {value}", row=row, field=field)
    return value


def _parse_arm(rec, suffix, row):
    n = _parse_number(rec.get(f"n_{suffix}"), row, f"n_{suffix}", integer=True)
    mean = _parse_number(rec.get(f"mean_{suffix}"), row, f"mean_{suffix}")
    sd = _parse_number(rec.get(f"sd_{suffix}"), row, f"sd_{suffix}")
    if sd <= 0.0:
        raise StudyParseError(f"sd must be positive, got {sd!r}", row=row, field=f"sd_{suffix}")
    return GroupSummary(n, mean, sd)


def parse_studies(source) -> list:
    """Parse comma-separated study summaries.

    ``source`` is a path, an open text file or the document text itself (any
    string containing a newline is treated as text). Row numbers in errors are
    file line numbers, the header being line 1.
    """
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, str) and "\n" in source:
        text = source
    else:
        with open(source, newline="", encoding="utf-8-sig") as fh:
            text = fh.read()
    reader = csv.DictReader(io.StringIO(text))
    header = [h.strip() for h in (reader.fieldnames or [])]
    if not header:
        raise StudyParseError("missing header row", row=1)
    reader.fieldnames = header
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise StudyParseError(f"missing column(s): {', '.join(missing)}", row=1)
    has_subgroup = "subgroup" in header

    studies = []
    seen = {}
    for rec in reader:
        row = reader.line_num
        if not any((v or "").strip() for v in rec.values() if isinstance(v, str)):
            continue
        study_id = (rec.get("study_id") or "").strip()
        if not study_id:
            raise StudyParseError("missing value", row=row, field="study_id")
        if study_id in seen:
            raise StudyParseError(f"duplicate study_id {study_id!r} (first seen on row {seen[study_id]})",
                                  row=row, field="study_id")
        seen[study_id] = row
        case = _parse_arm(rec, "case", row)
        control = _parse_arm(rec, "control", row)
        subgroup = (rec.get("subgroup") or "").strip() or None if has_subgroup else None
        studies.append(StudyRecord(study_id, case, control, subgroup))
    return studies


# ---------------------------------------------------------------------------
# Per-study effects


def compute_effects(studies: Sequence[StudyRecord], method: SmdMethod, alpha=DEFAULT_ALPHA) -> list:
    """One estimate per study, in input order.

    Emits an ``SdRatioWarning`` for every study whose sd ratio is outside
    [0.5, 2]. Estimator failures are re-raised as ``StudyEstimationError``
    naming the study.
    """
    if not studies:
        raise InsufficientStudies("no studies to analyse")
    effects = []
    for study in studies:
        pair = study.pair
        if sd_ratio_flagged(pair):
            warnings.warn(
                f"study {study.study_id}: sd ratio case/control = {sd_ratio(pair):.3g} is outside [0.5, 2]",
                SdRatioWarning,
                stacklevel=2,
            )
        try:
            est = estimate(pair, method, alpha)
        except GeoSmdError as exc:
            raise StudyEstimationError(study.study_id, exc) from exc
        effects.append(EffectEstimate(est.method, est.point, est.se, est.ci_low, est.ci_high, est.alpha,
                                      study.study_id))
    return effects


# ---------------------------------------------------------------------------
# Pooling


def pool_random_effects(effects: Sequence[EffectEstimate], alpha=DEFAULT_ALPHA) -> MetaResult:
    """DerSimonian-Laird random-effects pooling with a normal reference interval."""
    k = len(effects)
    if k < 2:
        raise InsufficientStudies(f"random-effects pooling needs at least 2 studies, got {k}")
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    theta = [float(e.point) for e in effects]
    var = []
    for e in effects:
        se = float(e.se)
        if not (math.isfinite(se) and se > 0.0):
            raise DomainError(f"standard errors must be finite and positive, got {se!r} for {e.label or 'a study'}")
        var.append(se * se)

    w = [1.0 / v for v in var]
    sw = math.fsum(w)
    fixed = math.fsum(wi * t for wi, t in zip(w, theta)) / sw
    q = math.fsum(wi * (t - fixed) ** 2 for wi, t in zip(w, theta))
    # sum(w) - sum(w^2)/sum(w) cancels when one weight dominates; use the pairwise form
    # 2 * sum_{i<j} w_i w_j / sum(w), summing over sorted weights so the order of studies is irrelevant
    ordered = sorted(w)
    prefix = list(itertools.accumulate(ordered))
    c = 2.0 * math.fsum(wi * acc for wi, acc in zip(ordered[1:], prefix)) / sw
    tau2 = max(0.0, (q - (k - 1)) / c) if c > 0.0 else 0.0

    w_re = [1.0 / (v + tau2) for v in var]
    sw_re = math.fsum(w_re)
    # weights relative to the largest, so equal weights give exactly the plain mean
    top = max(w_re)
    rel = [wi / top for wi in w_re]
    pooled = math.fsum(r * t for r, t in zip(rel, theta)) / math.fsum(rel)
    # weighted means can drift past the data range by an ulp
    pooled = min(max(pooled, min(theta)), max(theta))
    se = 1.0 / math.sqrt(sw_re)
    z = normal_quantile(1.0 - alpha / 2.0)
    p_value = min(1.0, 2.0 * normal_cdf(-abs(pooled) / se))
    i2 = max(0.0, (q - (k - 1)) / q) if q > 0.0 else 0.0
    methods = {e.method for e in effects}
    return MetaResult(
        pooled=pooled,
        se=se,
        ci_low=pooled - z * se,
        ci_high=pooled + z * se,
        p_value=p_value,
        tau2=tau2,
        q_stat=q,
        i2=i2,
        k=k,
        method=methods.pop() if len(methods) == 1 else None,
        alpha=alpha,
        weights=tuple(wi / sw_re for wi in w_re),
    )


def pool_by_subgroup(studies: Sequence[StudyRecord], effects: Sequence[EffectEstimate],
                     alpha=DEFAULT_ALPHA) -> dict:
    """Pool within each subgroup (first-appearance order) and overall under key ``None``.

    Subgroups with fewer than two studies are skipped.
    """
    groups = {}
    for study, effect in zip(studies, effects):
        groups.setdefault(study.subgroup, []).append(effect)
    out = {}
    if len(groups) > 1:
        for name, members in groups.items():
            if name is not None and len(members) >= 2:
                out[name] = pool_random_effects(members, alpha)
    out[None] = pool_random_effects(list(effects), alpha)
    return out


# ---------------------------------------------------------------------------
# Forest-plot data


def forest_data(effects: Sequence[EffectEstimate], result: MetaResult) -> list:
    """Rows ``FOREST_FIELDS`` per study plus a final summary row."""
    if len(result.weights) != len(effects):
        raise DomainError("result was not produced from these effects")
    total = math.fsum(result.weights)
    rows = []
    for i, (e, wt) in enumerate(zip(effects, result.weights)):
        rows.append({
            "study_id": e.label if e.label is not None else str(i + 1),
            "point": e.point,
            "ci_low": e.ci_low,
            "ci_high": e.ci_high,
            "weight_pct": 100.0 * wt / total,
        })
    rows.append({
        "study_id": SUMMARY_ID,
        "point": result.pooled,
        "ci_low": result.ci_low,
        "ci_high": result.ci_high,
        "weight_pct": 100.0,
    })
    return rows


def _fmt(value, precision):
    if isinstance(value, str):
        return value
    return repr(float(value)) if precision is None else f"{value:.{precision}g}"


def write_forest_csv(rows, fh, precision=None):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(FOREST_FIELDS)
    for row in rows:
        writer.writerow([_fmt(row[f], precision) for f in FOREST_FIELDS])


def write_forest_json(rows, fh, result: Optional[MetaResult] = None):
    doc = {"studies": rows[:-1], "summary": rows[-1]}
    if result is not None:
        doc["result"] = meta_result_dict(result)
    json.dump(doc, fh, indent=2)
    fh.write("\n")


def meta_result_dict(result: MetaResult) -> dict:
    return {
        "pooled": result.pooled,
        "se": result.se,
        "ci_low": result.ci_low,
        "ci_high": result.ci_high,
        "p_value": result.p_value,
        "tau2": result.tau2,
        "q_stat": result.q_stat,
        "i2": result.i2,
        "k": result.k,
        "alpha": result.alpha,
        "method": result.method.label if result.method else None,
    }
