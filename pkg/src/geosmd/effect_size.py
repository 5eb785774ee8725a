"""Standardized mean difference estimands, estimators and confidence intervals.

Four families are supported, each with a plug-in (Cohen-type) and a
bias-corrected (Hedges-type) estimator:

* ``pooled``: standardized by the pooled sample sd (Cohen's d, Hedges' g).
* ``glass``: standardized by one arm's sd; ``w=0`` uses the control arm,
  ``w=1`` the case arm.
* ``arithmetic``: standardized by ``sqrt(w*S1^2 + (1-w)*S0^2)``.
* ``geometric``: standardized by ``S1^w * S0^(1-w)``.

Differences are always case minus control. Glass and arithmetic intervals
invert a noncentral t; pooled and geometric intervals are Wald intervals.

Every estimator is written once as an array kernel (``_family_arrays``) that
the scalar API and the Monte Carlo harness share.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend
from .errors import DegreesOfFreedomTooSmall, DomainError, InvalidWeight, PooledUndefined, RangeError
from .numerics import MAX_NONCENTRALITY, bias_factor_exact, normal_quantile

__all__ = [
    "DEFAULT_ALPHA",
    "SD_RATIO_BOUNDS",
    "EffectEstimate",
    "Estimator",
    "Family",
    "GroupPair",
    "GroupSummary",
    "PopulationParams",
    "SmdMethod",
    "arithmetic_estimate",
    "cohen_d",
    "estimate",
    "geometric_cohen",
    "geometric_exact_moments",
    "geometric_hedges",
    "geometric_variance_approx",
    "glass_estimate",
    "hedges_g",
    "sd_ratio",
    "sd_ratio_flagged",
    "smd_ratio",
    "true_smd",
    "welch_df",
]

DEFAULT_ALPHA = 0.05
SD_RATIO_BOUNDS = (0.5, 2.0)
_POOLED_VAR_RTOL = 1e-9


class Family(str, enum.Enum):
    POOLED = "pooled"
    GLASS = "glass"
    ARITHMETIC = "arithmetic"
    GEOMETRIC = "geometric"


class Estimator(str, enum.Enum):
    COHEN = "cohen"
    HEDGES = "hedges"


def _positive_finite(name, value):
    value = float(value)
    if not (math.isfinite(value) and value > 0.0):
        raise DomainError(f"{name} must be finite and positive, got {value!r}")
    return value


@dataclass(frozen=True)
class GroupSummary:
    """Sample size, mean and standard deviation of one arm."""

    n: int
    mean: float
    sd: float

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)):
            if isinstance(self.n, float) and self.n.is_integer():
                object.__setattr__(self, "n", int(self.n))
            else:
                raise DomainError(f"n must be an integer, got {self.n!r}")
        if self.n < 2:
            raise DomainError(f"n must be at least 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        mean = float(self.mean)
        if not math.isfinite(mean):
            raise DomainError(f"mean must be finite, got {mean!r}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sd", _positive_finite("sd", self.sd))


@dataclass(frozen=True)
class GroupPair:
    case: GroupSummary
    control: GroupSummary

    def swapped(self):
        return GroupPair(self.control, self.case)


@dataclass(frozen=True)
class SmdMethod:
    """Estimand family, estimator type and weight on the case arm.

    ``w`` is ignored for the pooled family and normalized to 0 there.
    """

    family: Family
    estimator: Estimator = Estimator.HEDGES
    w: float = 0.5

    def __post_init__(self):
        try:
            family = Family(self.family)
        except ValueError:
            raise DomainError(f"unknown family {self.family!r}") from None
        try:
            estimator = Estimator(self.estimator)
        except ValueError:
            raise DomainError(f"unknown estimator {self.estimator!r}") from None
        w = float(self.w)
        if not (0.0 <= w <= 1.0):
            raise InvalidWeight(f"w must lie in [0, 1], got {self.w!r}")
        if family is Family.GLASS and w not in (0.0, 1.0):
            raise InvalidWeight(f"the glass family needs w = 0 (control sd) or w = 1 (case sd), got {self.w!r}")
        if family is Family.POOLED:
            w = 0.0
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "estimator", estimator)
        object.__setattr__(self, "w", w)

    @property
    def label(self):
        if self.family is Family.POOLED:
            return f"pooled-{self.estimator.value}"
        return f"{self.family.value}-{self.estimator.value}(w={self.w:g})"


@dataclass(frozen=True)
class EffectEstimate:
    method: SmdMethod
    point: float
    se: float
    ci_low: float
    ci_high: float
    alpha: float = DEFAULT_ALPHA
    label: Optional[str] = None


@dataclass(frozen=True)
class PopulationParams:
    mu1: float
    mu0: float
    var1: float
    var0: float

    def __post_init__(self):
        for name in ("mu1", "mu0"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "var1", _positive_finite("var1", self.var1))
        object.__setattr__(self, "var0", _positive_finite("var0", self.var0))


def _check_weight(w):
    w = float(w)
    if not (0.0 <= w <= 1.0):
        raise InvalidWeight(f"w must lie in [0, 1], got {w!r}")
    return w


def _check_alpha(alpha):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


# ---------------------------------------------------------------------------
# Estimands


def true_smd(params: PopulationParams, method: SmdMethod) -> float:
    """Population SMD targeted by ``method``'s family."""
    diff = params.mu1 - params.mu0
    fam = method.family
    if fam is Family.POOLED:
        if abs(params.var1 - params.var0) > _POOLED_VAR_RTOL * max(params.var1, params.var0):
            raise PooledUndefined(
                f"the pooled SMD needs equal variances, got var1={params.var1!r}, var0={params.var0!r}"
            )
        return diff / math.sqrt(params.var0)
    w = method.w
    if fam is Family.GLASS or w in (0.0, 1.0):
        return diff / math.sqrt(params.var1 if w == 1.0 else params.var0)
    if fam is Family.ARITHMETIC:
        return diff / math.sqrt(w * params.var1 + (1.0 - w) * params.var0)
    return diff / _geometric_sd(math.sqrt(params.var1), math.sqrt(params.var0), w)


def smd_ratio(var1, var0, w) -> float:
    """Ratio of the geometric to the arithmetic SMD for the same mean difference.

    Always at least 1 (AM-GM), with equality at equal variances or ``w`` in {0, 1}.
    """
    var1 = _positive_finite("var1", var1)
    var0 = _positive_finite("var0", var0)
    w = _check_weight(w)
    if w in (0.0, 1.0) or var1 == var0:
        return 1.0
    return math.sqrt(w * var1 + (1.0 - w) * var0) / _geometric_sd(math.sqrt(var1), math.sqrt(var0), w)


def _geometric_sd(s1, s0, w):
    # equal sds return the sd itself so the pooled coincidence holds bit-exactly
    if isinstance(s1, np.ndarray):
        return np.where(s1 == s0, s1, s1**w * s0 ** (1.0 - w))
    return s1 if s1 == s0 else s1**w * s0 ** (1.0 - w)


# ---------------------------------------------------------------------------
# Array kernels shared with the simulation harness.
#
# Inputs are the two arms' sample sizes (scalars) and arrays of means and
# sds. Each kernel returns (point, se, ci_low, ci_high) arrays; an interval
# that could not be computed (noncentrality outside the supported range) is
# NaN at both ends.


def _wald(point, se, z):
    return point, se, point - z * se, point + z * se


def _pooled_arrays(estimator, n1, n0, diff, s1, s0, z, kern):
    df = n1 + n0 - 2
    pooled = np.sqrt(((n1 - 1) * s1 * s1 + (n0 - 1) * s0 * s0) / df)
    sd = np.where(s1 == s0, s1, pooled)
    d = diff / sd
    se = np.sqrt(d * d / (2.0 * (n1 + n0)) + (n1 + n0) / (n1 * n0))
    if estimator is Estimator.HEDGES:
        j = kern.bias_factor(float(df), 1.0)
        d, se = d * j, se * j
    return _wald(d, se, z)


def _nct_interval(scale, df, lam, alpha, kern):
    lo = kern.nct_quantile_array(alpha / 2.0, df, lam)
    hi = kern.nct_quantile_array(1.0 - alpha / 2.0, df, lam)
    return scale * lo, scale * hi


def _welch_lambda(diff, n1, n0, s1, s0):
    # plain quotient: mean difference over its estimated standard error
    return diff / np.sqrt(s1 * s1 / n1 + s0 * s0 / n0)


def _glass_arrays(estimator, w, n1, n0, diff, s1, s0, alpha, kern):
    if w == 1.0:
        n_ref, s_ref, n_oth, s_oth = n1, s1, n0, s0
    else:
        n_ref, s_ref, n_oth, s_oth = n0, s0, n1, s1
    nu = float(n_ref - 1)
    d = diff / s_ref
    scale = np.sqrt(1.0 / n_ref + (s_oth / s_ref) ** 2 / n_oth)
    lam = _welch_lambda(diff, n1, n0, s1, s0)
    lo, hi = _nct_interval(scale, np.full(np.shape(d), nu), lam, alpha, kern)
    se = np.sqrt(scale * scale + d * d / (2.0 * nu))
    if estimator is Estimator.HEDGES:
        j = kern.bias_factor(nu, 1.0)
        d, se, lo, hi = d * j, se * j, lo * j, hi * j
    return d, se, lo, hi


def _welch_df(w, n1, n0, v1, v0):
    if w == 0.0:
        return np.full(np.shape(v0), float(n0 - 1))
    if w == 1.0:
        return np.full(np.shape(v1), float(n1 - 1))
    mix = w * v1 + (1.0 - w) * v0
    return mix * mix / (w * w * v1 * v1 / (n1 - 1) + (1.0 - w) ** 2 * v0 * v0 / (n0 - 1))


def _arithmetic_sd(w, s1, s0):
    if w == 0.0:
        return s0
    if w == 1.0:
        return s1
    return np.where(s1 == s0, s1, np.sqrt(w * s1 * s1 + (1.0 - w) * s0 * s0))


def _arithmetic_arrays(estimator, w, n1, n0, diff, s1, s0, alpha, kern):
    v1, v0 = s1 * s1, s0 * s0
    sd = _arithmetic_sd(w, s1, s0)
    d = diff / sd
    nu = _welch_df(w, n1, n0, v1, v0)
    scale = np.sqrt((v1 / n1 + v0 / n0) / (sd * sd))
    lam = _welch_lambda(diff, n1, n0, s1, s0)
    lo, hi = _nct_interval(scale, nu, lam, alpha, kern)
    se = np.sqrt(scale * scale + d * d / (2.0 * nu))
    if estimator is Estimator.HEDGES:
        j = kern.bias_factor_array(nu, 1.0)
        d, se, lo, hi = d * j, se * j, lo * j, hi * j
    return d, se, lo, hi


def _geometric_se(d, w, n1, n0, s1, s0):
    k1, k0 = n1 - 1, n0 - 1
    r2 = (s1 / s0) ** 2
    var = d * d / 2.0 * (w * w / k1 + (1.0 - w) ** 2 / k0) + (k1 * r2**-w + k0 * r2 ** (1.0 - w)) / (k1 * k0)
    return np.sqrt(var)


def _geometric_correction(w, n1, n0, kern):
    b1 = 1.0 if w == 0.0 else kern.bias_factor(float(n1 - 1), w)
    b0 = 1.0 if w == 1.0 else kern.bias_factor(float(n0 - 1), 1.0 - w)
    return b1 * b0


def _geometric_arrays(estimator, w, n1, n0, diff, s1, s0, z, kern):
    d = diff / _geometric_sd(s1, s0, w)
    se = _geometric_se(d, w, n1, n0, s1, s0)
    if estimator is Estimator.HEDGES:
        c = _geometric_correction(w, n1, n0, kern)
        d, se = d * c, se * c
    return _wald(d, se, z)


def _family_arrays(method, n1, n0, diff, s1, s0, alpha, kern=None):
    """Vectorized estimator: ``diff``, ``s1`` and ``s0`` are equally shaped arrays."""
    kern = kern or _backend.impl
    fam, est, w = method.family, method.estimator, method.w
    if fam is Family.POOLED or fam is Family.GEOMETRIC:
        z = kern.normal_ppf(1.0 - alpha / 2.0)
        if fam is Family.POOLED:
            return _pooled_arrays(est, n1, n0, diff, s1, s0, z, kern)
        return _geometric_arrays(est, w, n1, n0, diff, s1, s0, z, kern)
    if fam is Family.GLASS:
        return _glass_arrays(est, w, n1, n0, diff, s1, s0, alpha, kern)
    return _arithmetic_arrays(est, w, n1, n0, diff, s1, s0, alpha, kern)


def check_sample_sizes(method: SmdMethod, n1: int, n0: int, s1=None, s0=None):
    """Raise ``DegreesOfFreedomTooSmall`` if ``method`` is undefined at these sizes.

    The arithmetic Hedges-type check depends on the sample sds; without them
    only the sizes are checked.
    """
    fam, est, w = method.family, method.estimator, method.w
    if est is not Estimator.HEDGES:
        return
    if fam is Family.POOLED and n1 + n0 - 2 <= 1:
        raise DegreesOfFreedomTooSmall(f"Hedges' g needs n1 + n0 - 2 > 1, got {n1 + n0 - 2}")
    if fam is Family.GLASS:
        n_ref = n1 if w == 1.0 else n0
        if n_ref - 1 <= 1:
            raise DegreesOfFreedomTooSmall(f"Hedges-type glass estimate needs a reference arm of n >= 3, got {n_ref}")
    if fam is Family.GEOMETRIC and not (n1 - 1 > w and n0 - 1 > 1.0 - w):
        raise DegreesOfFreedomTooSmall(
            f"Hedges-type geometric estimate needs n1 - 1 > w and n0 - 1 > 1 - w, got n=({n1}, {n0}), w={w:g}"
        )
    if fam is Family.ARITHMETIC:
        if s1 is None:
            # the Welch df is at least the smaller arm's n - 1, whatever the sds
            floor = {0.0: n0, 1.0: n1}.get(w, min(n1, n0)) - 1
            if floor <= 1:
                raise DegreesOfFreedomTooSmall(
                    f"Hedges-type arithmetic estimate needs every possible Welch df > 1, got n=({n1}, {n0})"
                )
            return
        nu = float(_welch_df(w, n1, n0, np.float64(s1) ** 2, np.float64(s0) ** 2))
        if not nu > 1.0:
            raise DegreesOfFreedomTooSmall(f"Hedges-type arithmetic estimate needs Welch df > 1, got {nu:.6g}")


# ---------------------------------------------------------------------------
# Scalar API


def _scalar(pair: GroupPair, method: SmdMethod, alpha) -> EffectEstimate:
    alpha = _check_alpha(alpha)
    n1, n0 = pair.case.n, pair.control.n
    s1, s0 = pair.case.sd, pair.control.sd
    check_sample_sizes(method, n1, n0, s1, s0)
    diff = np.array([pair.case.mean - pair.control.mean])
    if method.family in (Family.GLASS, Family.ARITHMETIC):
        lam = float(_welch_lambda(diff, n1, n0, s1, s0)[0])
        if abs(lam) > MAX_NONCENTRALITY:
            raise RangeError(
                f"estimated noncentrality {lam:.6g} exceeds {MAX_NONCENTRALITY:g}; the noncentral t interval is unsupported"
            )
    point, se, lo, hi = _family_arrays(method, n1, n0, diff, np.array([s1]), np.array([s0]), alpha)
    return EffectEstimate(method, float(point[0]), float(se[0]), float(lo[0]), float(hi[0]), alpha, method.label)


def estimate(pair: GroupPair, method: SmdMethod, alpha=DEFAULT_ALPHA) -> EffectEstimate:
    """Point estimate, standard error and ``1 - alpha`` interval for ``method``."""
    return _scalar(pair, method, alpha)


def cohen_d(pair: GroupPair, alpha=DEFAULT_ALPHA) -> EffectEstimate:
    return _scalar(pair, SmdMethod(Family.POOLED, Estimator.COHEN), alpha)


def hedges_g(pair: GroupPair, alpha=DEFAULT_ALPHA) -> EffectEstimate:
    return _scalar(pair, SmdMethod(Family.POOLED, Estimator.HEDGES), alpha)


def glass_estimate(pair: GroupPair, method: SmdMethod, alpha=DEFAULT_ALPHA) -> EffectEstimate:
    if method.family is not Family.GLASS:
        raise DomainError(f"glass_estimate needs the glass family, got {method.family.value}")
    return _scalar(pair, method, alpha)


def arithmetic_estimate(pair: GroupPair, method: SmdMethod, alpha=DEFAULT_ALPHA) -> EffectEstimate:
    """Arithmetic-family estimate.

    The interval treats the statistic as noncentral t with Welch degrees of
    freedom. That approximation is known to undercover; it is reproduced as
    is rather than patched.
    """
    if method.family is not Family.ARITHMETIC:
        raise DomainError(f"arithmetic_estimate needs the arithmetic family, got {method.family.value}")
    return _scalar(pair, method, alpha)


def geometric_cohen(pair: GroupPair, w, alpha=DEFAULT_ALPHA) -> EffectEstimate:
    return _scalar(pair, SmdMethod(Family.GEOMETRIC, Estimator.COHEN, _check_weight(w)), alpha)


def geometric_hedges(pair: GroupPair, w, alpha=DEFAULT_ALPHA) -> EffectEstimate:
    """Geometric estimate multiplied by ``B(n1-1, w) * B(n0-1, 1-w)``, which makes it exactly unbiased."""
    return _scalar(pair, SmdMethod(Family.GEOMETRIC, Estimator.HEDGES, _check_weight(w)), alpha)


def welch_df(pair: GroupPair, w) -> float:
    """Welch-Satterthwaite degrees of freedom of ``w*S1^2 + (1-w)*S0^2``."""
    w = _check_weight(w)
    return float(_welch_df(w, pair.case.n, pair.control.n, pair.case.sd**2, pair.control.sd**2))


def sd_ratio(pair: GroupPair) -> float:
    return pair.case.sd / pair.control.sd


def sd_ratio_flagged(pair: GroupPair) -> bool:
    """True when the case/control sd ratio falls outside ``SD_RATIO_BOUNDS``."""
    lo, hi = SD_RATIO_BOUNDS
    return not lo <= sd_ratio(pair) <= hi


# ---------------------------------------------------------------------------
# Sampling moments of the geometric Cohen-type estimator under normality


def _check_sizes(n1, n0):
    for name, n in (("n1", n1), ("n0", n0)):
        if int(n) != n or n < 2:
            raise DomainError(f"{name} must be an integer >= 2, got {n!r}")
    return int(n1), int(n0)


def geometric_exact_moments(params: PopulationParams, n1: int, n0: int, w) -> tuple:
    """Exact mean and variance of the geometric Cohen-type estimator."""
    n1, n0 = _check_sizes(n1, n0)
    w = _check_weight(w)
    if not (n1 - 1 > 2.0 * w and n0 - 1 > 2.0 * (1.0 - w)):
        raise DegreesOfFreedomTooSmall(
            f"exact variance needs n1 - 1 > 2w and n0 - 1 > 2(1 - w), got n=({n1}, {n0}), w={w:g}"
        )
    delta = true_smd(params, SmdMethod(Family.GEOMETRIC, Estimator.COHEN, w))
    first = bias_factor_exact(n1 - 1, w) * bias_factor_exact(n0 - 1, 1.0 - w)
    second = bias_factor_exact(n1 - 1, 2.0 * w) * bias_factor_exact(n0 - 1, 2.0 - 2.0 * w)
    ratio = params.var1 / params.var0
    noise = (ratio ** (1.0 - w) / n1 + ratio**-w / n0) / second
    mean = delta / first
    variance = delta * delta / second - mean * mean + noise
    return mean, variance


def geometric_variance_approx(params: PopulationParams, n1: int, n0: int, w) -> float:
    """Large-sample variance of the geometric Cohen-type estimator with ``n - 1`` in place of ``n``."""
    n1, n0 = _check_sizes(n1, n0)
    w = _check_weight(w)
    delta = true_smd(params, SmdMethod(Family.GEOMETRIC, Estimator.COHEN, w))
    se = _geometric_se(delta, w, n1, n0, math.sqrt(params.var1), math.sqrt(params.var0))
    return float(se * se)
