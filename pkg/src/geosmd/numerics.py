"""Special functions, distribution utilities and reproducible random streams.

The heavy lifting (noncentral t, inverse normal, the random stream) lives in
the kernel backend chosen by :mod:`geosmd._backend`; this module validates
arguments and exposes a stable scalar API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DomainError, RangeError

__all__ = [
    "MAX_NONCENTRALITY",
    "RngStream",
    "bias_factor_approx",
    "bias_factor_exact",
    "hedges_j",
    "log_gamma",
    "log_gamma_ratio",
    "noncentral_t_cdf",
    "noncentral_t_quantile",
    "normal_cdf",
    "normal_quantile",
    "sample_normal",
]

MAX_NONCENTRALITY = 40.0
_UINT64_MAX = 2**64 - 1


def _finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")
    return value


def log_gamma(x):
    """Natural log of the gamma function for x > 0."""
    x = _finite("x", x)
    if x <= 0.0:
        raise DomainError(f"log_gamma needs x > 0, got {x!r}")
    return math.lgamma(x)


def log_gamma_ratio(x, h):
    """ln Gamma(x + h) - ln Gamma(x), accurate when both arguments are large."""
    x = _finite("x", x)
    h = _finite("h", h)
    if x <= 0.0 or h < 0.0:
        raise DomainError("log_gamma_ratio needs x > 0 and h >= 0")
    return _backend.impl.log_gamma_ratio(x, h)


def bias_factor_exact(nu, w):
    """Bias-correction factor ``(2/nu)^(w/2) Gamma(nu/2) / Gamma((nu-w)/2)``.

    Equals 1 at ``w = 0`` and Hedges' J at ``w = 1``. Evaluated in log space, so
    large ``nu`` does not overflow. ``w`` may exceed 1 (the exact variance of
    the geometric estimator needs the factor at ``2w``).
    """
    nu = _finite("nu", nu)
    w = _finite("w", w)
    if w < 0.0:
        raise DomainError(f"w must be nonnegative, got {w!r}")
    if w == 0.0:
        if nu <= 0.0:
            raise DomainError(f"nu must be positive, got {nu!r}")
        return 1.0
    if nu <= w:
        raise DomainError(f"bias factor needs nu > w, got nu={nu!r}, w={w!r}")
    return _backend.impl.bias_factor(nu, w)


def bias_factor_approx(nu, w):
    """Closed-form approximation ``1 - (2 + w) w / (4 nu - 1)``."""
    nu = _finite("nu", nu)
    w = _finite("w", w)
    if nu < 1.0:
        raise DomainError(f"approximation is defined for nu >= 1, got {nu!r}")
    return 1.0 - (2.0 + w) * w / (4.0 * nu - 1.0)


def hedges_j(nu):
    """Hedges' small-sample factor J_nu."""
    return bias_factor_exact(nu, 1.0)


def normal_cdf(x):
    return _backend.impl.normal_cdf(float(x))


def normal_quantile(p):
    """Inverse standard normal CDF (Wichura's AS 241)."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p!r}")
    return _backend.impl.normal_ppf(p)


def _check_nct(nu, lam):
    nu = float(nu)
    lam = float(lam)
    if not (nu > 0.0 and math.isfinite(nu)):
        raise DomainError(f"degrees of freedom must be finite and positive, got {nu!r}")
    if math.isnan(lam):
        raise DomainError("noncentrality is NaN")
    if abs(lam) > MAX_NONCENTRALITY:
        raise RangeError(f"|noncentrality| > {MAX_NONCENTRALITY:g} is not supported, got {lam!r}")
    return nu, lam


def noncentral_t_cdf(x, nu, lam):
    """P(T <= x) for T ~ t(nu, lam).

    Poisson-weighted incomplete-beta series summed outward from the Poisson
    mode, so large ``lam`` does not underflow the leading weights.
    """
    nu, lam = _check_nct(nu, lam)
    return _backend.impl.nct_cdf(float(x), nu, lam)


def noncentral_t_quantile(p, nu, lam):
    """Lower-tail quantile of t(nu, lam).

    The search starts from ``lam +/- 10 * max(1, sqrt(nu / (nu - 2)))``, widens
    the bracket until it straddles ``p`` and then runs Brent's method.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p!r}")
    nu, lam = _check_nct(nu, lam)
    return _backend.impl.nct_quantile(p, nu, lam)


@dataclass(frozen=True)
class RngStream:
    """Descriptor for one counter-based random stream.

    Draw ``k`` of a stream is a pure function of ``(master_seed, stream_id, k)``,
    so streams can be consumed in any order or on any worker.
    """

    master_seed: int
    stream_id: int

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= int(value) <= _UINT64_MAX:
                raise DomainError(f"{name} must be an unsigned 64-bit integer, got {value!r}")

    def uniforms(self, count, start=0):
        """Uniform(0, 1) variates with 52 random bits, never exactly 0 or 1."""
        return _backend.impl.uniforms(int(self.master_seed), int(self.stream_id), int(start), int(count))

    def normals(self, count, start=0):
        return _backend.impl.standard_normals(int(self.master_seed), int(self.stream_id), int(start), int(count))


def sample_normal(stream, mu, sigma, count):
    """``count`` i.i.d. N(mu, sigma^2) draws by inversion of the stream's uniforms."""
    mu = _finite("mu", mu)
    sigma = _finite("sigma", sigma)
    if sigma < 0.0:
        raise DomainError(f"sigma must be nonnegative, got {sigma!r}")
    if count < 0:
        raise DomainError(f"count must be nonnegative, got {count!r}")
    if count == 0:
        return np.empty(0)
    if sigma == 0.0:
        return np.full(int(count), mu)
    return mu + sigma * stream.normals(int(count))
