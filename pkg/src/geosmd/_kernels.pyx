# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels; a line-for-line port of ``_fallback``.

Inputs are assumed validated by the callers in ``numerics``/``simulate``.
"""

import numpy as np

from libc.math cimport ceil, erfc, exp, fabs, isnan, lgamma, log, log1p, sqrt, INFINITY, NAN
from libc.stdint cimport uint64_t
from libc.stdlib cimport free, malloc

BACKEND = "compiled"

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15
cdef uint64_t _STREAM_MULT = 0xD1B54A32D192ED03
cdef uint64_t _MIX1 = 0xBF58476D1CE4E5B9
cdef uint64_t _MIX2 = 0x94D049BB133111EB
cdef double _U52 = 2.220446049250313e-16
cdef double _SQRT1_2 = 0.7071067811865476
cdef double _EPS = 2.220446049250313e-16

NCT_MAX_TERMS = 2000
NCT_SERIES_TOL = 1e-14
NCT_QUANTILE_XTOL = 1e-13
cdef int _NCT_MAX_TERMS = 2000
cdef double _NCT_SERIES_TOL = 1e-14
cdef double _NCT_QUANTILE_XTOL = 1e-13
cdef int _BETACF_MAXIT = 20000

cdef double[8] _A = [3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
                     1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
                     3.3430575583588128105e4, 2.5090809287301226727e3]
cdef double[8] _B = [1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
                     2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
                     5.2264952788528545610e3]
cdef double[8] _C = [1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
                     3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
                     2.27238449892691845833e-2, 7.74545014278341407640e-4]
cdef double[8] _D = [1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
                     1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
                     1.05075007164441684324e-9]
cdef double[8] _E = [6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
                     2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
                     2.71155556874348757815e-5, 2.01033439929228813265e-7]
cdef double[8] _F = [1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
                     7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
                     2.04426310338993978564e-15]
cdef double[7] _STIRLING = [1.0 / 12.0, -1.0 / 360.0, 1.0 / 1260.0, -1.0 / 1680.0, 1.0 / 1188.0,
                            -691.0 / 360360.0, 1.0 / 156.0]


# ---------------------------------------------------------------------------
# counter-based generator

cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * _MIX1
    z = (z ^ (z >> 27)) * _MIX2
    return z ^ (z >> 31)


cdef inline uint64_t _stream_key(uint64_t seed, uint64_t stream) noexcept nogil:
    return _mix64(_mix64(seed + _GOLDEN) ^ (stream * _STREAM_MULT + _GOLDEN))


cdef inline double _uniform(uint64_t key, uint64_t counter) noexcept nogil:
    cdef uint64_t bits = _mix64(key + (counter + 1) * _GOLDEN)
    return (<double>(bits >> 12) + 0.5) * _U52


def stream_key(uint64_t master_seed, uint64_t stream_id):
    return _stream_key(master_seed, stream_id)


def uniform_bits(uint64_t master_seed, uint64_t stream_id, uint64_t start, Py_ssize_t count):
    out = np.empty(count, dtype=np.uint64)
    cdef uint64_t[::1] view = out
    cdef uint64_t key = _stream_key(master_seed, stream_id)
    cdef Py_ssize_t i
    for i in range(count):
        view[i] = _mix64(key + (start + <uint64_t>i + 1) * _GOLDEN)
    return out


def uniforms(uint64_t master_seed, uint64_t stream_id, uint64_t start, Py_ssize_t count):
    out = np.empty(count, dtype=np.float64)
    cdef double[::1] view = out
    cdef uint64_t key = _stream_key(master_seed, stream_id)
    cdef Py_ssize_t i
    for i in range(count):
        view[i] = _uniform(key, start + <uint64_t>i)
    return out


def standard_normals(uint64_t master_seed, uint64_t stream_id, uint64_t start, Py_ssize_t count):
    out = np.empty(count, dtype=np.float64)
    cdef double[::1] view = out
    cdef uint64_t key = _stream_key(master_seed, stream_id)
    cdef Py_ssize_t i
    for i in range(count):
        view[i] = _normal_ppf(_uniform(key, start + <uint64_t>i))
    return out


# ---------------------------------------------------------------------------
# normal distribution

cdef inline double _poly(const double* coef, double r) noexcept nogil:
    cdef double acc = coef[7]
    cdef int i
    for i in range(6, -1, -1):
        acc = acc * r + coef[i]
    return acc


cdef double _normal_ppf(double p) noexcept nogil:
    cdef double q = p - 0.5
    cdef double r, val
    if fabs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_A, r) / _poly(_B, r)
    r = p if q < 0.0 else 1.0 - p
    r = sqrt(-log(r))
    if r <= 5.0:
        r -= 1.6
        val = _poly(_C, r) / _poly(_D, r)
    else:
        r -= 5.0
        val = _poly(_E, r) / _poly(_F, r)
    return -val if q < 0.0 else val


def normal_ppf(double p):
    return _normal_ppf(p)


def normal_ppf_array(p):
    arr = np.ascontiguousarray(p, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[::1] src = arr.reshape(-1)
    cdef double[::1] dst = out.reshape(-1)
    cdef Py_ssize_t i
    for i in range(src.shape[0]):
        dst[i] = _normal_ppf(src[i])
    return out


def normal_cdf(double x):
    return 0.5 * erfc(-x * _SQRT1_2)


# ---------------------------------------------------------------------------
# gamma-function ratios

cdef inline double _stirling_tail(double z) noexcept nogil:
    cdef double zi = 1.0 / z
    cdef double z2 = zi * zi
    cdef double acc = 0.0
    cdef int i
    for i in range(6, -1, -1):
        acc = acc * z2 + _STIRLING[i]
    return acc * zi


cdef double _log_gamma_ratio(double x, double h) noexcept nogil:
    cdef double y, shift
    cdef int m, i
    if h == 0.0:
        return 0.0
    if x < 10.0:
        m = <int>ceil(10.0 - x)
        if h <= m:
            return lgamma(x + h) - lgamma(x)
        shift = 0.0
        for i in range(m):
            shift += log(x + i)
        return shift + _log_gamma_ratio(x + m, h - m)
    y = x + h
    return ((y - 0.5) * log1p(h / x) + h * log(x) - h
            + _stirling_tail(y) - _stirling_tail(x))


cdef double _bias_factor(double nu, double w) noexcept nogil:
    cdef double half
    if w == 0.0:
        return 1.0
    half = 0.5 * w
    return exp(half * log(2.0 / nu) + _log_gamma_ratio(0.5 * (nu - w), half))


def log_gamma_ratio(double x, double h):
    return _log_gamma_ratio(x, h)


def bias_factor(double nu, double w):
    if w != 0.0 and not nu > w:
        return NAN
    return _bias_factor(nu, w)


def bias_factor_array(nu, double w):
    arr = np.ascontiguousarray(nu, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[::1] src = arr.reshape(-1)
    cdef double[::1] dst = out.reshape(-1)
    cdef Py_ssize_t i
    for i in range(src.shape[0]):
        dst[i] = _bias_factor(src[i], w) if src[i] > w else NAN
    return out


# ---------------------------------------------------------------------------
# incomplete beta and noncentral t

cdef double _betacf(double a, double b, double x) noexcept nogil:
    cdef double fpmin = 1e-300
    cdef double qab = a + b
    cdef double qap = a + 1.0
    cdef double qam = a - 1.0
    cdef double c = 1.0
    cdef double d = 1.0 - qab * x / qap
    cdef double h, aa, delta
    cdef int m, m2
    if fabs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if fabs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if fabs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if fabs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < 1e-16:
            break
    return h


cdef double _betainc(double a, double b, double x, double omx, double lx, double lomx) noexcept nogil:
    cdef double lg, front
    if x <= 0.0:
        return 0.0
    if omx <= 0.0:
        return 1.0
    if a >= b:
        lg = _log_gamma_ratio(a, b) - lgamma(b)
    else:
        lg = _log_gamma_ratio(b, a) - lgamma(a)
    front = exp(lg + a * lx + b * lomx)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, omx) / b


def betainc(double a, double b, double x, double omx):
    if x <= 0.0:
        return 0.0
    if omx <= 0.0:
        return 1.0
    return _betainc(a, b, x, omx, log(x), log(omx))


cdef inline double _beta_gap(double a, double b, double lx, double lomx) noexcept nogil:
    cdef double lg
    if b >= a + 1.0:
        lg = _log_gamma_ratio(b, a) - lgamma(a + 1.0)
    else:
        lg = _log_gamma_ratio(a + 1.0, b - 1.0) - lgamma(b)
    return exp(lg + a * lx + b * lomx)


cdef double _nct_cdf_nonneg(double t, double df, double nc) noexcept nogil:
    cdef double base = 0.5 * erfc(nc * _SQRT1_2)
    cdef double tt, x, omx, lam, b, lk, pk, qk, ap, aq, lx, lomx
    cdef double ip, iq, gp, gq, total, p, q, fip, fiq, fgp, fgq, remaining, err
    cdef double bip, biq, bgp, bgq, a_p, a_q
    cdef long k, j
    cdef int it
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
        k = <long>lam
        lk = k * log(lam) - lam
        pk = exp(lk - lgamma(k + 1.0))
        qk = exp(lk - lgamma(k + 1.5)) * nc * _SQRT1_2
    ap = k + 0.5
    aq = k + 1.0
    lomx = -log1p(tt / df)
    lx = log(x)
    ip = _betainc(ap, b, x, omx, lx, lomx)
    iq = _betainc(aq, b, x, omx, lx, lomx)
    gp = _beta_gap(ap, b, lx, lomx)
    gq = _beta_gap(aq, b, lx, lomx)
    total = pk * ip + qk * iq

    p = pk
    q = qk
    fip = ip
    fiq = iq
    fgp = gp
    fgq = gq
    remaining = 1.0 - pk
    j = k
    for it in range(_NCT_MAX_TERMS):
        fip -= fgp
        fiq -= fgq
        fgp *= x * (j + 0.5 + b) / (j + 1.5)
        fgq *= x * (j + 1.0 + b) / (j + 2.0)
        j += 1
        p *= lam / j
        q *= lam / (j + 0.5)
        total += p * fip + q * fiq
        remaining -= p
        err = (remaining if remaining > 0.0 else 0.0) * (fabs(fip) + sqrt(lam / (j + 1.5)) * fabs(fiq))
        if err < _NCT_SERIES_TOL:
            break

    p = pk
    q = qk
    bip = ip
    biq = iq
    bgp = gp
    bgq = gq
    j = k
    while j > 0:
        a_p = j + 0.5
        a_q = j + 1.0
        bgp *= a_p / (x * (a_p - 1.0 + b))
        bgq *= a_q / (x * (a_q - 1.0 + b))
        bip += bgp
        biq += bgq
        p *= j / lam
        q *= (j + 0.5) / lam
        total += p * bip + q * biq
        if p + fabs(q) < 1e-18:
            break
        j -= 1

    return base + 0.5 * total


cdef double _nct_cdf(double t, double df, double nc) noexcept nogil:
    cdef double val
    if isnan(t):
        return NAN
    if t == INFINITY:
        return 1.0
    if t == -INFINITY:
        return 0.0
    if t < 0.0:
        val = 1.0 - _nct_cdf_nonneg(-t, df, -nc)
    else:
        val = _nct_cdf_nonneg(t, df, nc)
    if val < 0.0:
        return 0.0
    if val > 1.0:
        return 1.0
    return val


def nct_cdf(double t, double df, double nc):
    return _nct_cdf(t, df, nc)


cdef double _brent_nct(double p, double df, double nc, double a, double b,
                       double fa, double fb, double xtol) noexcept nogil:
    cdef double c = a
    cdef double fc = fa
    cdef double d = b - a
    cdef double e = d
    cdef double tol1, xm, s, pp, qq, r, lim
    cdef int it
    for it in range(300):
        if (fb > 0.0 and fc > 0.0) or (fb < 0.0 and fc < 0.0):
            c = a
            fc = fa
            d = b - a
            e = d
        if fabs(fc) < fabs(fb):
            a = b
            b = c
            c = a
            fa = fb
            fb = fc
            fc = fa
        tol1 = 2.0 * _EPS * fabs(b) + 0.5 * xtol
        xm = 0.5 * (c - b)
        if fabs(xm) <= tol1 or fb == 0.0:
            return b
        if fabs(e) >= tol1 and fabs(fa) > fabs(fb):
            s = fb / fa
            if a == c:
                pp = 2.0 * xm * s
                qq = 1.0 - s
            else:
                qq = fa / fc
                r = fb / fc
                pp = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0))
                qq = (qq - 1.0) * (r - 1.0) * (s - 1.0)
            if pp > 0.0:
                qq = -qq
            pp = fabs(pp)
            lim = 3.0 * xm * qq - fabs(tol1 * qq)
            if fabs(e * qq) < lim:
                lim = fabs(e * qq)
            if 2.0 * pp < lim:
                e = d
                d = pp / qq
            else:
                d = xm
                e = d
        else:
            d = xm
            e = d
        a = b
        fa = fb
        if fabs(d) > tol1:
            b += d
        else:
            b += tol1 if xm > 0.0 else -tol1
        fb = _nct_cdf(b, df, nc) - p
    return b


cdef double _nct_quantile(double p, double df, double nc) noexcept nogil:
    # start from the inverted normal approximation; see _fallback._quantile_start
    cdef double z = _normal_ppf(p)
    cdef double a = 1.0 - 0.25 / df
    cdef double den = a * a - z * z / (2.0 * df)
    cdef double disc = a * a + (nc * nc - z * z) / (2.0 * df)
    cdef double t0, step, spread, lo, hi, flo, fhi
    cdef int i
    if df >= 1.0 and den > 0.0 and disc > 0.0:
        t0 = (a * nc + z * sqrt(disc)) / den
        step = 0.1 * sqrt(1.0 + t0 * t0 / (2.0 * df)) / a
    else:
        spread = sqrt(df / (df - 2.0)) if df > 2.0 else 1.0
        if spread < 1.0:
            spread = 1.0
        t0 = nc
        step = 10.0 * spread
    lo = t0 - step
    hi = t0 + step
    step *= 2.0
    flo = _nct_cdf(lo, df, nc) - p
    if flo > 0.0:
        for i in range(200):
            hi = lo
            fhi = flo
            lo -= step
            step *= 2.0
            flo = _nct_cdf(lo, df, nc) - p
            if flo <= 0.0:
                break
    else:
        fhi = _nct_cdf(hi, df, nc) - p
        for i in range(200):
            if fhi >= 0.0:
                break
            lo = hi
            flo = fhi
            hi += step
            step *= 2.0
            fhi = _nct_cdf(hi, df, nc) - p
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    return _brent_nct(p, df, nc, lo, hi, flo, fhi, _NCT_QUANTILE_XTOL)


def nct_quantile(double p, double df, double nc):
    return _nct_quantile(p, df, nc)


def nct_quantile_array(double p, df, nc):
    """Elementwise quantiles; entries with |nc| > 40 or invalid df give NaN."""
    d_arr, c_arr = np.broadcast_arrays(np.asarray(df, dtype=np.float64),
                                       np.asarray(nc, dtype=np.float64))
    d_flat = np.ascontiguousarray(d_arr).reshape(-1)
    c_flat = np.ascontiguousarray(c_arr).reshape(-1)
    out = np.empty(d_flat.shape[0], dtype=np.float64)
    cdef double[::1] dv = d_flat
    cdef double[::1] cv = c_flat
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef double dd, cc
    with nogil:
        for i in range(ov.shape[0]):
            dd = dv[i]
            cc = cv[i]
            if not (dd > 0.0) or dd == INFINITY or not (fabs(cc) <= 40.0):
                ov[i] = NAN
            else:
                ov[i] = _nct_quantile(p, dd, cc)
    return out.reshape(d_arr.shape)


# ---------------------------------------------------------------------------
# simulation hot loop

def arm_summaries(uint64_t master_seed, uint64_t stream_offset, uint64_t stream_stride,
                  uint64_t rep_start, Py_ssize_t rep_count, Py_ssize_t n, double mu, double sigma):
    """Sample mean and sd (ddof=1) of ``n`` normal draws for each replicate.

    Replicate ``r`` draws from stream ``stream_offset + stream_stride * r``.
    """
    means = np.empty(rep_count, dtype=np.float64)
    sds = np.empty(rep_count, dtype=np.float64)
    cdef double[::1] mv = means
    cdef double[::1] sv = sds
    cdef double* buf = <double*>malloc(n * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef Py_ssize_t i, j
    cdef uint64_t key
    cdef double s, m, ss, d
    try:
        with nogil:
            for i in range(rep_count):
                key = _stream_key(master_seed, stream_offset + stream_stride * (rep_start + <uint64_t>i))
                buf[0] = mu + sigma * _normal_ppf(_uniform(key, 0))
                s = buf[0]
                for j in range(1, n):
                    buf[j] = mu + sigma * _normal_ppf(_uniform(key, <uint64_t>j))
                    s += buf[j]
                m = s / n
                d = buf[0] - m
                ss = d * d
                for j in range(1, n):
                    d = buf[j] - m
                    ss += d * d
                mv[i] = m
                sv[i] = sqrt(ss / (n - 1))
    finally:
        free(buf)
    return means, sds
