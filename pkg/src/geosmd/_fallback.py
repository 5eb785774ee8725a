"""Pure-Python/numpy implementations of the numerical kernels.

Mirrors ``_kernels.pyx`` function for function. The counter-based generator is
bit-identical between the two backends; floating-point results agree to a few
ulps (the libm used for ``log`` may differ from numpy's).
"""

import math

import numpy as np

BACKEND = "python"

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_STREAM_MULT = 0xD1B54A32D192ED03
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_U52 = 2.0 ** -52

_SQRT1_2 = math.sqrt(0.5)
_EPS = 2.220446049250313e-16

# AS 241 (PPND16) coefficients
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)

# Stirling series coefficients B_2k / (2k (2k-1))
_STIRLING = (1.0 / 12.0, -1.0 / 360.0, 1.0 / 1260.0, -1.0 / 1680.0, 1.0 / 1188.0,
             -691.0 / 360360.0, 1.0 / 156.0)

NCT_MAX_TERMS = 2000
NCT_SERIES_TOL = 1e-14
_BETACF_MAXIT = 20000


# --------------------------------------------------------------------------
# counter-based generator (SplitMix64 output function over a keyed counter)

def _mix64(z):
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def stream_key(master_seed, stream_id):
    seed = _mix64((master_seed + _GOLDEN) & _MASK)
    return _mix64(seed ^ ((stream_id * _STREAM_MULT + _GOLDEN) & _MASK))


def _mix64_array(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _bits_from_keys(keys, counters):
    # keys broadcast against counters; uint64 arithmetic wraps mod 2**64
    state = keys + (counters + np.uint64(1)) * np.uint64(_GOLDEN)
    return _mix64_array(state)


def uniform_bits(master_seed, stream_id, start, count):
    key = np.uint64(stream_key(master_seed, stream_id))
    counters = np.arange(start, start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _bits_from_keys(key, counters)


def _bits_to_uniform(bits):
    return ((bits >> np.uint64(12)).astype(np.float64) + 0.5) * _U52


def uniforms(master_seed, stream_id, start, count):
    return _bits_to_uniform(uniform_bits(master_seed, stream_id, start, count))


def standard_normals(master_seed, stream_id, start, count):
    return normal_ppf_array(uniforms(master_seed, stream_id, start, count))


# --------------------------------------------------------------------------
# normal distribution

def _poly(coef, r):
    acc = coef[7]
    for c in coef[6::-1]:
        acc = acc * r + c
    return acc


def normal_ppf(p):
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_A, r) / _poly(_B, r)
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = _poly(_C, r) / _poly(_D, r)
    else:
        r -= 5.0
        val = _poly(_E, r) / _poly(_F, r)
    return -val if q < 0.0 else val


def normal_ppf_array(p):
    p = np.asarray(p, dtype=np.float64)
    out = np.empty_like(p)
    q = p - 0.5
    central = np.abs(q) <= 0.425
    qc = q[central]
    r = 0.180625 - qc * qc
    out[central] = qc * _poly(_A, r) / _poly(_B, r)
    tail = ~central
    qt = q[tail]
    r = np.where(qt < 0.0, p[tail], 1.0 - p[tail])
    r = np.sqrt(-np.log(r))
    near = r <= 5.0
    val = np.empty_like(r)
    rn = r[near] - 1.6
    val[near] = _poly(_C, rn) / _poly(_D, rn)
    rf = r[~near] - 5.0
    val[~near] = _poly(_E, rf) / _poly(_F, rf)
    out[tail] = np.where(qt < 0.0, -val, val)
    return out


def normal_cdf(x):
    return 0.5 * math.erfc(-x * _SQRT1_2)


# --------------------------------------------------------------------------
# gamma-function ratios

def _stirling_tail(z):
    zi = 1.0 / z
    z2 = zi * zi
    acc = 0.0
    for c in reversed(_STIRLING):
        acc = acc * z2 + c
    return acc * zi


def log_gamma_ratio(x, h):
    """ln Gamma(x + h) - ln Gamma(x) for x > 0, h >= 0, without cancellation."""
    if h == 0.0:
        return 0.0
    if x < 10.0:
        m = math.ceil(10.0 - x)
        if h <= m:
            return math.lgamma(x + h) - math.lgamma(x)
        # shift x up by m via the recurrence, Stirling for the rest
        shift = 0.0
        for i in range(m):
            shift += math.log(x + i)
        return shift + log_gamma_ratio(x + m, h - m)
    # Stirling difference; (x+h-1/2) ln(x+h) - (x-1/2) ln x rewritten via log1p
    y = x + h
    return ((y - 0.5) * math.log1p(h / x) + h * math.log(x) - h
            + _stirling_tail(y) - _stirling_tail(x))


def bias_factor(nu, w):
    if w == 0.0:
        return 1.0
    if not nu > w:
        return math.nan
    half = 0.5 * w
    return math.exp(half * math.log(2.0 / nu) + log_gamma_ratio(0.5 * (nu - w), half))


def bias_factor_array(nu, w):
    nu = np.asarray(nu, dtype=np.float64)
    out = np.empty_like(nu)
    flat_in, flat_out = nu.ravel(), out.ravel()
    for i in range(flat_in.size):
        v = flat_in[i]
        flat_out[i] = bias_factor(v, w) if v > w else math.nan
    return out


# --------------------------------------------------------------------------
# incomplete beta and noncentral t

def _betacf(a, b, x):
    fpmin = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


def _log_beta_front(a, b, lx, lomx):
    # log of x^a (1-x)^b / B(a, b)
    if a >= b:
        lg = log_gamma_ratio(a, b) - math.lgamma(b)
    else:
        lg = log_gamma_ratio(b, a) - math.lgamma(a)
    return lg + a * lx + b * lomx


def betainc(a, b, x, omx, lx=None, lomx=None):
    """Regularized incomplete beta I_x(a, b).

    ``omx`` is 1 - x supplied exactly; ``lx``/``lomx`` optionally carry
    accurately computed logs of x and 1 - x.
    """
    if x <= 0.0:
        return 0.0
    if omx <= 0.0:
        return 1.0
    if lx is None:
        lx = math.log(x)
    if lomx is None:
        lomx = math.log(omx)
    front = math.exp(_log_beta_front(a, b, lx, lomx))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, omx) / b


def _beta_gap(a, b, lx, lomx):
    # I_x(a, b) - I_x(a + 1, b); gamma ratio taken against the larger argument
    if b >= a + 1.0:
        lg = log_gamma_ratio(b, a) - math.lgamma(a + 1.0)
    else:
        lg = log_gamma_ratio(a + 1.0, b - 1.0) - math.lgamma(b)
    return math.exp(lg + a * lx + b * lomx)


def _nct_cdf_nonneg(t, df, nc):
    base = 0.5 * math.erfc(nc * _SQRT1_2)
    if t == 0.0:
        return base
    tt = t * t
    x = tt / (tt + df)
    omx = df / (tt + df)
    if omx <= 0.0:
        return 1.0
    if x == 0.0:
        # t^2 underflowed; the series terms are below double resolution
        return base
    lam = 0.5 * nc * nc
    b = 0.5 * df
    if lam == 0.0:
        k = 0
        pk = 1.0
        qk = 0.0
    else:
        k = int(lam)
        lk = k * math.log(lam) - lam
        pk = math.exp(lk - math.lgamma(k + 1.0))
        qk = math.exp(lk - math.lgamma(k + 1.5)) * nc * _SQRT1_2
    ap = k + 0.5
    aq = k + 1.0
    lomx = -math.log1p(tt / df)
    lx = math.log(x)
    ip = betainc(ap, b, x, omx, lx, lomx)
    iq = betainc(aq, b, x, omx, lx, lomx)
    gp = _beta_gap(ap, b, lx, lomx)
    gq = _beta_gap(aq, b, lx, lomx)
    total = pk * ip + qk * iq

    # forward from the Poisson mode
    p, q = pk, qk
    fip, fiq, fgp, fgq = ip, iq, gp, gq
    remaining = 1.0 - pk
    j = k
    for _ in range(NCT_MAX_TERMS):
        fip -= fgp
        fiq -= fgq
        fgp *= x * (j + 0.5 + b) / (j + 1.5)
        fgq *= x * (j + 1.0 + b) / (j + 2.0)
        j += 1
        p *= lam / j
        q *= lam / (j + 0.5)
        total += p * fip + q * fiq
        remaining -= p
        err = max(remaining, 0.0) * (abs(fip) + math.sqrt(lam / (j + 1.5)) * abs(fiq))
        if err < NCT_SERIES_TOL:
            break

    # backward to j = 0
    p, q = pk, qk
    bip, biq, bgp, bgq = ip, iq, gp, gq
    for j in range(k, 0, -1):
        a_p = j + 0.5
        a_q = j + 1.0
        bgp *= a_p / (x * (a_p - 1.0 + b))
        bgq *= a_q / (x * (a_q - 1.0 + b))
        bip += bgp
        biq += bgq
        p *= j / lam
        q *= (j + 0.5) / lam
        total += p * bip + q * biq
        if p + abs(q) < 1e-18:
            break

    return base + 0.5 * total


def nct_cdf(t, df, nc):
    if math.isnan(t):
        return math.nan
    if t == math.inf:
        return 1.0
    if t == -math.inf:
        return 0.0
    if t < 0.0:
        val = 1.0 - _nct_cdf_nonneg(-t, df, -nc)
    else:
        val = _nct_cdf_nonneg(t, df, nc)
    return min(1.0, max(0.0, val))


def _brent(f, a, b, fa, fb, xtol, maxiter=300):
    c, fc = a, fa
    d = e = b - a
    for _ in range(maxiter):
        if (fb > 0.0 and fc > 0.0) or (fb < 0.0 and fc < 0.0):
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol1 = 2.0 * _EPS * abs(b) + 0.5 * xtol
        xm = 0.5 * (c - b)
        if abs(xm) <= tol1 or fb == 0.0:
            return b
        if abs(e) >= tol1 and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * xm * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0.0:
                q = -q
            p = abs(p)
            if 2.0 * p < min(3.0 * xm * q - abs(tol1 * q), abs(e * q)):
                e = d
                d = p / q
            else:
                d = xm
                e = d
        else:
            d = xm
            e = d
        a, fa = b, fb
        if abs(d) > tol1:
            b += d
        else:
            b += tol1 if xm > 0.0 else -tol1
        fb = f(b)
    return b


NCT_QUANTILE_XTOL = 1e-13


def _quantile_start(p, df, nc):
    """Starting point and step for the quantile search.

    Inverts the normal approximation P(T <= t) ~ Phi((t (1 - 1/(4 df)) - nc) / sqrt(1 + t^2 / (2 df)));
    falls back to ``nc`` with a wide step when the approximation has no root.
    """
    z = normal_ppf(p)
    a = 1.0 - 0.25 / df
    den = a * a - z * z / (2.0 * df)
    disc = a * a + (nc * nc - z * z) / (2.0 * df)
    if df >= 1.0 and den > 0.0 and disc > 0.0:
        t0 = (a * nc + z * math.sqrt(disc)) / den
        return t0, 0.1 * math.sqrt(1.0 + t0 * t0 / (2.0 * df)) / a
    spread = math.sqrt(df / (df - 2.0)) if df > 2.0 else 1.0
    return nc, 10.0 * max(spread, 1.0)


def nct_quantile(p, df, nc):
    t0, step = _quantile_start(p, df, nc)

    def f(x):
        return nct_cdf(x, df, nc) - p

    lo, hi = t0 - step, t0 + step
    step *= 2.0
    flo = f(lo)
    if flo > 0.0:
        for _ in range(200):
            hi, fhi = lo, flo
            lo -= step
            step *= 2.0
            flo = f(lo)
            if flo <= 0.0:
                break
    else:
        fhi = f(hi)
        for _ in range(200):
            if fhi >= 0.0:
                break
            lo, flo = hi, fhi
            hi += step
            step *= 2.0
            fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    return _brent(f, lo, hi, flo, fhi, NCT_QUANTILE_XTOL)


def nct_quantile_array(p, df, nc):
    """Elementwise quantiles; entries with |nc| > 40 or invalid df give NaN."""
    df = np.asarray(df, dtype=np.float64)
    nc = np.asarray(nc, dtype=np.float64)
    df, nc = np.broadcast_arrays(df, nc)
    out = np.empty(df.shape)
    flat_df, flat_nc, flat_out = df.ravel(), nc.ravel(), out.ravel()
    for i in range(flat_out.size):
        d, c = flat_df[i], flat_nc[i]
        if not (d > 0.0) or not math.isfinite(d) or not (abs(c) <= 40.0):
            flat_out[i] = math.nan
        else:
            flat_out[i] = nct_quantile(p, d, c)
    return out


# --------------------------------------------------------------------------
# simulation hot loop

def arm_summaries(master_seed, stream_offset, stream_stride, rep_start, rep_count, n, mu, sigma):
    """Sample mean and sd (ddof=1) of ``n`` normal draws for each replicate.

    Replicate ``r`` draws from stream ``stream_offset + stream_stride * r``.
    """
    reps = np.arange(rep_start, rep_start + rep_count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        seed = np.uint64(_mix64((master_seed + _GOLDEN) & _MASK))
        streams = np.uint64(stream_offset) + np.uint64(stream_stride) * reps
        keys = _mix64_array(seed ^ (streams * np.uint64(_STREAM_MULT) + np.uint64(_GOLDEN)))
        counters = np.arange(n, dtype=np.uint64)
        bits = _bits_from_keys(keys[:, None], counters[None, :])
    x = mu + sigma * normal_ppf_array(_bits_to_uniform(bits))
    # column-sequential sums so the rounding matches the compiled loop
    s = x[:, 0].copy()
    for j in range(1, n):
        s += x[:, j]
    means = s / n
    d = x[:, 0] - means
    ss = d * d
    for j in range(1, n):
        d = x[:, j] - means
        ss += d * d
    return means, np.sqrt(ss / (n - 1))
