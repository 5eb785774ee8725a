import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from geosmd.errors import DomainError, RangeError
from geosmd.numerics import (
    RngStream,
    bias_factor_approx,
    bias_factor_exact,
    hedges_j,
    log_gamma,
    log_gamma_ratio,
    noncentral_t_cdf,
    noncentral_t_quantile,
    normal_cdf,
    normal_quantile,
    sample_normal,
)

from _oracles import bias_factor_mp, hedges_j_mp, nct_cdf_mp, normal_quantile_mp

# mpmath at 50 digits
LN_SQRT_PI = 0.57236494292470008707
LN_24 = 3.1780538303479456196
B_1_HALF = 0.58136831701911858
B_4_1 = 0.79788456080286536
J_18 = 0.9576464270237181
Z_975 = 1.9599639845400542355


class TestLogGamma:
    def test_examples(self):
        assert log_gamma(1.0) == 0.0
        assert log_gamma(0.5) == pytest.approx(LN_SQRT_PI, abs=1e-12)
        assert log_gamma(5.0) == pytest.approx(LN_24, abs=1e-12)

    @pytest.mark.parametrize("x", [0.1, 0.37, 1.5, 7.25, 33.0, 171.5, 1e3, 12345.678, 2.5e5, 1e6])
    def test_against_mpmath(self, x):
        ref = float(mp.loggamma(x))
        # at x = 1e6 the value is ~1.3e7, where one ulp is ~2e-9, so the bound scales with magnitude
        assert abs(log_gamma(x) - ref) <= 1e-12 * max(1.0, abs(ref))

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            log_gamma(bad)

    @pytest.mark.parametrize("x,h", [(0.5, 0.5), (3.0, 0.25), (4.5, 20.0), (10.0, 0.5), (5e5, 0.5), (1e6, 0.75)])
    def test_ratio_against_mpmath(self, x, h):
        ref = float(mp.loggamma(mp.mpf(x) + h) - mp.loggamma(x))
        assert log_gamma_ratio(x, h) == pytest.approx(ref, rel=1e-13, abs=1e-15)


class TestBiasFactor:
    def test_examples(self):
        assert bias_factor_exact(10, 0) == 1.0
        assert bias_factor_exact(1, 0.5) == pytest.approx(B_1_HALF, abs=1e-12)
        assert bias_factor_exact(4, 1) == pytest.approx(B_4_1, abs=1e-12)
        assert hedges_j(18) == pytest.approx(J_18, abs=1e-12)

    def test_approx_examples(self):
        assert bias_factor_approx(10, 0) == 1.0
        assert bias_factor_approx(1, 0.5) == pytest.approx(0.583333, abs=1e-6)
        assert bias_factor_approx(4, 1) == pytest.approx(0.8, abs=1e-15)
        assert abs(bias_factor_approx(1, 0.5) - bias_factor_exact(1, 0.5)) <= 0.002

    @pytest.mark.parametrize("nu", [1.5, 2, 3.7, 10, 99, 350, 1000, 1e4, 1e6])
    @pytest.mark.parametrize("w", [0.05, 0.5, 0.9, 1.0, 1.4, 2.0])
    def test_against_mpmath(self, nu, w):
        if nu <= w:
            pytest.skip("undefined")
        assert bias_factor_exact(nu, w) == pytest.approx(float(bias_factor_mp(nu, w)), rel=1e-13)

    def test_no_overflow_at_large_nu(self):
        # direct gamma ratios overflow above nu ~ 343
        assert bias_factor_exact(400, 1) == pytest.approx(float(hedges_j_mp(400)), rel=1e-13)

    def test_zero_weight_is_exactly_one(self):
        for nu in [0.1, 1, 2.5, 1e3, 1e6]:
            assert bias_factor_exact(nu, 0.0) == 1.0

    def test_below_one_on_grid(self):
        for nu in range(2, 101):
            for k in range(1, 11):
                w = k / 10
                if nu > w + 1:
                    assert 0.0 < bias_factor_exact(nu, w) < 1.0

    def test_hedges_j(self):
        for nu in range(2, 201):
            assert abs(bias_factor_exact(nu, 1) - float(hedges_j_mp(nu))) <= 1e-12

    @pytest.mark.parametrize("nu,w", [(1, 1), (0.5, 0.7), (-1, 0.2)])
    def test_domain(self, nu, w):
        with pytest.raises(DomainError):
            bias_factor_exact(nu, w)

    def test_approx_domain(self):
        with pytest.raises(DomainError):
            bias_factor_approx(0.5, 0.5)
        with pytest.raises(DomainError):
            bias_factor_approx(math.nan, 0.5)


class TestNormal:
    def test_examples(self):
        assert normal_quantile(0.5) == 0.0
        assert normal_quantile(0.975) == pytest.approx(Z_975, abs=1e-12)
        assert normal_quantile(0.025) == pytest.approx(-Z_975, abs=1e-12)

    @pytest.mark.parametrize("p", [1e-300, 1e-20, 1e-8, 0.001, 0.02425, 0.3, 0.6, 0.97575, 0.999999, 1 - 2**-53])
    def test_against_mpmath(self, p):
        ref = float(normal_quantile_mp(p))
        assert normal_quantile(p) == pytest.approx(ref, rel=1e-14, abs=1e-10)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, math.nan])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            normal_quantile(p)

    def test_cdf(self):
        for x in [-8.0, -1.3, 0.0, 0.7, 5.0]:
            assert normal_cdf(x) == pytest.approx(float(mp.ncdf(x)), rel=1e-14)


class TestNoncentralT:
    def test_examples(self):
        assert noncentral_t_cdf(0.0, 10, 0.0) == 0.5
        assert noncentral_t_cdf(math.inf, 10, 3.0) == 1.0
        assert noncentral_t_cdf(-math.inf, 10, 3.0) == 0.0
        assert noncentral_t_cdf(2.2281, 10, 0.0) == pytest.approx(0.975, abs=1e-4)

    def test_central_against_density_integral(self):
        dens = lambda t: stats.t.pdf(t, 10)  # noqa: E731
        ref = 0.5 + integrate.quad(dens, 0.0, 2.2281, epsabs=1e-14)[0]
        assert noncentral_t_cdf(2.2281, 10, 0.0) == pytest.approx(ref, abs=1e-12)

    @pytest.mark.parametrize("x,nu,lam", [
        (0.5, 3, 1.0), (-2.0, 5, 0.5), (3.0, 10, 2.0), (-1.0, 10, -2.0), (12.0, 25, 10.0),
        (30.0, 2.5, 39.0), (-35.0, 40, -38.0), (1.2, 1e6, 1.0), (8.0, 0.7, 3.0), (0.0, 7, -3.0),
    ])
    def test_against_integral_oracle(self, x, nu, lam):
        assert noncentral_t_cdf(x, nu, lam) == pytest.approx(float(nct_cdf_mp(x, nu, lam)), abs=1e-12)

    def test_against_scipy_grid(self):
        for x in np.linspace(-6, 12, 13):
            for nu in (2.0, 9.0, 60.0):
                for lam in (-3.0, 0.0, 1.5, 6.0):
                    ref = stats.nct.cdf(x, nu, lam)
                    if np.isfinite(ref):  # scipy gives NaN in some far tails
                        assert noncentral_t_cdf(x, nu, lam) == pytest.approx(ref, abs=1e-10)

    def test_central_matches_t(self):
        for x in (-4.0, -0.3, 1.0, 2.5):
            for nu in (1.0, 4.0, 30.0):
                assert noncentral_t_cdf(x, nu, 0.0) == pytest.approx(stats.t.cdf(x, nu), abs=1e-13)

    def test_range_limit(self):
        with pytest.raises(RangeError):
            noncentral_t_cdf(1.0, 10, 40.5)
        with pytest.raises(RangeError):
            noncentral_t_quantile(0.5, 10, -41)
        assert 0.0 <= noncentral_t_cdf(40.0, 10, 40.0) <= 1.0

    @pytest.mark.parametrize("nu", [0.0, -2.0, math.inf, math.nan])
    def test_bad_df(self, nu):
        with pytest.raises(DomainError):
            noncentral_t_cdf(1.0, nu, 0.0)

    def test_saturation(self):
        assert noncentral_t_cdf(1e300, 5, 2.0) == 1.0
        assert noncentral_t_cdf(-1e300, 5, 2.0) == 0.0

    def test_quantile_examples(self):
        assert noncentral_t_quantile(0.5, 7, 0.0) == pytest.approx(0.0, abs=1e-12)
        assert noncentral_t_quantile(0.975, 10, 0.0) == pytest.approx(2.2281, abs=1e-3)

    def test_quantile_against_density_root(self):
        def tail(q):
            return 0.5 + integrate.quad(lambda t: stats.t.pdf(t, 10), 0.0, q, epsabs=1e-14)[0] - 0.975

        ref = optimize.brentq(tail, 1.0, 4.0, xtol=1e-14)
        assert noncentral_t_quantile(0.975, 10, 0.0) == pytest.approx(ref, abs=1e-9)

    def test_roundtrip_grid(self):
        for x in range(-3, 4):
            for nu in (3, 10, 50):
                for lam in (-2.0, 0.0, 2.0):
                    p = noncentral_t_cdf(x, nu, lam)
                    assert abs(noncentral_t_quantile(p, nu, lam) - x) <= 1e-7

    @pytest.mark.parametrize("p", [1e-6, 0.025, 0.5, 0.975, 0.999999])
    @pytest.mark.parametrize("nu,lam", [(1.0, 0.0), (2.0, 5.0), (4.5, -3.0), (13.2, 3.0), (500.0, 39.0), (1e5, -20.0)])
    def test_quantile_hits_probability(self, p, nu, lam):
        q = noncentral_t_quantile(p, nu, lam)
        assert abs(noncentral_t_cdf(q, nu, lam) - p) <= 1e-8

    @pytest.mark.parametrize("p", [0.0, 1.0, 1.5])
    def test_quantile_domain(self, p):
        with pytest.raises(DomainError):
            noncentral_t_quantile(p, 5, 1.0)

    @settings(max_examples=200, deadline=None)
    @given(
        x1=st.floats(-50, 50), dx=st.floats(0, 20),
        nu=st.floats(0.5, 1e4), lam=st.floats(-40, 40), dlam=st.floats(0, 5),
    )
    def test_monotone(self, x1, dx, nu, lam, dlam):
        # nondecreasing in x, nonincreasing in the noncentrality (up to rounding)
        slack = 1e-12
        assert noncentral_t_cdf(x1 + dx, nu, lam) >= noncentral_t_cdf(x1, nu, lam) - slack
        lam2 = min(lam + dlam, 40.0)
        assert noncentral_t_cdf(x1, nu, lam2) <= noncentral_t_cdf(x1, nu, lam) + slack

    @settings(max_examples=100, deadline=None)
    @given(p1=st.floats(1e-6, 1 - 1e-6), p2=st.floats(1e-6, 1 - 1e-6), nu=st.floats(1.0, 500), lam=st.floats(-20, 20))
    def test_quantile_increasing(self, p1, p2, nu, lam):
        lo, hi = sorted((p1, p2))
        if hi - lo < 1e-6:
            return
        assert noncentral_t_quantile(lo, nu, lam) < noncentral_t_quantile(hi, nu, lam)


class TestRandomStreams:
    def test_degenerate(self):
        assert np.all(sample_normal(RngStream(1, 2), 3.5, 0.0, 17) == 3.5)

    def test_mean_of_million(self):
        x = sample_normal(RngStream(2024, 0), 2.0, 1.0, 1_000_000)
        assert abs(x.mean() - 2.0) <= 0.004
        assert abs(x.std() - 1.0) <= 0.004

    def test_repeatable(self):
        a = sample_normal(RngStream(99, 5), 0.0, 1.0, 1000)
        b = sample_normal(RngStream(99, 5), 0.0, 1.0, 1000)
        assert a.tobytes() == b.tobytes()

    def test_random_access(self):
        s = RngStream(7, 11)
        full = s.normals(500)
        assert full[123:400].tobytes() == s.normals(277, start=123).tobytes()

    def test_streams_differ(self):
        a = RngStream(5, 0).uniforms(100)
        b = RngStream(5, 1).uniforms(100)
        c = RngStream(6, 0).uniforms(100)
        assert not np.array_equal(a, b) and not np.array_equal(a, c)

    def test_uniforms_open_interval_and_distribution(self):
        u = RngStream(3, 3).uniforms(200_000)
        assert u.min() > 0.0 and u.max() < 1.0
        assert stats.kstest(u, "uniform").pvalue > 1e-4

    def test_normals_distribution(self):
        z = RngStream(8, 1).normals(200_000)
        assert stats.kstest(z, "norm").pvalue > 1e-4

    def test_domain(self):
        with pytest.raises(DomainError):
            sample_normal(RngStream(1, 1), 0.0, -1.0, 5)
        with pytest.raises(DomainError):
            sample_normal(RngStream(1, 1), 0.0, 1.0, -1)
        with pytest.raises(DomainError):
            RngStream(-1, 0)
        with pytest.raises(DomainError):
            RngStream(0, 2**64)
        assert sample_normal(RngStream(1, 1), 0.0, 1.0, 0).size == 0
