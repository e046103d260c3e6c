import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from reinsopt.contracts import ContractEvaluator, LayerProgram, indemnity
from reinsopt.pricing import (
    ExpectedValuePricing,
    ExponentialMarketPricing,
    GammaLaw,
    KernelCDF,
    KFunction,
    _copula_z,
    clayton_conditional,
    clayton_sample,
    condition_check,
    expected_market_factor,
    k_function,
    kf_monte_carlo,
    solve_delta,
    w_function,
)
from reinsopt.severity import PortfolioSpec, calibrate_shape, simulate_portfolio

MARKET = ExponentialMarketPricing(gamma_re=0.2, omega=0.1, theta=10.0, gamma=0.1)
STEEP = ExponentialMarketPricing(gamma_re=0.0, omega=2.0, theta=10.0, gamma=0.1)


def gamma_spec(jmu=50.0):
    return PortfolioSpec.from_expected_claims(jmu, 0.05, calibrate_shape("gamma", 10, 15))


class TestGammaLaw:
    def test_parameters(self):
        law = GammaLaw(1.0, 0.3)
        assert law.shape == pytest.approx(1 / 0.09)
        assert law.scale == pytest.approx(0.09)

    def test_mgf_closed_form(self):
        law = GammaLaw()
        z = stats.gamma(law.shape, scale=law.scale)
        assert law.mgf(0.7) == pytest.approx(z.expect(lambda t: np.exp(0.7 * t)), rel=1e-9)

    def test_mgf_rejects_large_omega(self):
        with pytest.raises(ValueError):
            ExponentialMarketPricing(0.2, 11.2, 10.0, 0.1)

    def test_tails(self):
        law = GammaLaw()
        assert law.isf(1e-12) == pytest.approx(stats.gamma(law.shape, scale=law.scale).isf(1e-12), rel=1e-9)


class TestW:
    def test_expected_value_constant(self):
        assert w_function(ExpectedValuePricing(0.2, 0.1), 0.3) == pytest.approx(1.2)

    def test_zero_omega_constant(self):
        r = ExponentialMarketPricing(0.2, 0.0, 10.0, 0.1)
        assert np.allclose(w_function(r, np.array([0.01, 0.5, 0.99])), 1.2)

    def test_against_copula_draws(self):
        # condition on U = 0.9 exactly and average M(Z) over 10^6 draws of Y
        rng = np.random.default_rng(3)
        y = rng.random(10**6)
        mz = MARKET.market_factor(_copula_z(np.full(y.size, 0.9), y, 10.0, MARKET.z_law))
        se = mz.std() / math.sqrt(y.size)
        assert abs(w_function(MARKET, 0.9) - mz.mean()) < 3 * se

    def test_scalar_and_vector_agree(self):
        u = np.array([1e-6, 0.2, 0.7, 0.999])
        vec = w_function(MARKET, u)
        assert np.allclose(vec, [w_function(MARKET, x) for x in u], rtol=1e-7)


class TestK:
    def test_linear_values(self):
        k = k_function(ExpectedValuePricing(0.2, 0.1))
        assert (k(0.0), k(0.5), k(1.0)) == pytest.approx((0.2, 0.1, 0.0), abs=1e-15)

    @pytest.mark.parametrize("regime", [MARKET, STEEP, ExpectedValuePricing(0.3, 0.1)])
    def test_k_at_one(self, regime):
        assert k_function(regime)(1.0) == 0.0

    def test_market_k0(self):
        assert k_function(MARKET).k0 == pytest.approx(0.2, abs=1e-6)

    def test_k0_two_ways(self):
        for regime in (MARKET, STEEP):
            assert abs(k_function(regime).k0 - (expected_market_factor(regime) - 1)) < 1e-6

    def test_derivative_vs_finite_differences(self):
        k = k_function(MARKET)
        u = np.linspace(0.005, 0.995, 100)
        h = 1e-5
        fd = (k(u + h) - k(u - h)) / (2 * h)
        assert np.max(np.abs(fd - k.derivative(u))) < 1e-5

    def test_interpolated_w_matches_quadrature(self):
        k = k_function(MARKET)
        u = np.array([1e-9, 1e-3, 0.05, 0.37, 0.81, 0.995])
        assert np.allclose(k.w(u), w_function(MARKET, u), rtol=1e-6)

    def test_nonnegative_under_condition(self):
        k = k_function(MARKET)
        assert condition_check(MARKET).holds
        assert k(np.linspace(0, 1, 10_001)).min() >= -1e-9

    def test_steep_market_has_interior_maximum(self):
        k = k_function(STEEP)
        assert 0.5 < k.argmax < 0.7
        assert k.maximum == pytest.approx(0.2447, abs=2e-4)
        assert k.w(k.argmax) == pytest.approx(1.0, abs=1e-9)


class TestDelta:
    def test_expected_value_half(self):
        assert abs(solve_delta(KFunction.linear(0.2), 0.1) - 0.5) < 1e-10

    def test_equal_loadings(self):
        # K(1 - delta) = gamma_re delta reaches gamma only at delta = 1
        assert solve_delta(KFunction.linear(0.1), 0.1) == pytest.approx(1.0)

    def test_too_expensive(self):
        assert solve_delta(KFunction.linear(0.05), 0.1) is None

    def test_market_against_grid_scan(self):
        k = k_function(MARKET)
        delta = solve_delta(k, 0.1)
        u = np.linspace(0.0, 1.0, 1_000_001)
        scan = 1.0 - u[np.argmax(k(u) < 0.1)]
        assert abs(delta - scan) <= 1e-6
        assert abs(k(1 - delta) - 0.1) < 1e-10

    def test_sign_structure(self):
        k = k_function(STEEP)
        delta = solve_delta(k, 0.1)
        assert k(1 - delta - 1e-6) > 0.1 > k(1 - delta + 1e-6)
        assert k.derivative(1 - delta) <= 0

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_linear_root(self, gre, gamma):
        d = solve_delta(KFunction.linear(gre), gamma)
        if gre < gamma:
            assert d is None
        else:
            assert d == pytest.approx(gamma / gre, rel=1e-10)


class TestCondition:
    def test_holds(self):
        assert condition_check(ExpectedValuePricing(0.2, 0.1)).holds

    def test_clause_two_fails(self):
        rep = condition_check(ExpectedValuePricing(0.05, 0.1))
        assert rep.w_nondecreasing and not rep.k0_exceeds_gamma

    def test_buhlmann(self):
        rep = condition_check(STEEP)
        assert rep.k0 == pytest.approx(0.0, abs=1e-6)
        assert not rep.holds


class TestClayton:
    def test_independence_limit(self):
        assert clayton_conditional(0.3, 0.7, 1e-8) == pytest.approx(0.7, abs=1e-6)

    def test_domain(self):
        with pytest.raises(ValueError):
            clayton_conditional(0.0, 0.5, 2.0)
        with pytest.raises(ValueError):
            clayton_conditional(0.5, 1.0, 2.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-12, 1 - 1e-9), st.floats(1e-12, 1 - 1e-9), st.floats(0.01, 50))
    def test_range(self, u, y, theta):
        v = clayton_conditional(u, y, theta)
        assert 0.0 < v <= 1.0

    @pytest.mark.parametrize("theta", [1.0, 5.0, 10.0])
    def test_kendall_tau(self, theta):
        u, v = clayton_sample(10**6, theta, np.random.default_rng(int(theta)))
        # tau-b on 10^6 pairs is O(n log n) in scipy
        tau = stats.kendalltau(u, v).statistic
        assert abs(tau - theta / (theta + 2)) < 0.002


class TestKernelCDF:
    def test_binned_matches_exact(self):
        x = np.random.default_rng(0).gamma(2.0, size=20_000)
        kc = KernelCDF(x)
        grid = np.linspace(-1, 15, 300)
        binned = np.interp(grid, *kc._table)
        assert np.max(np.abs(binned - kc._exact(grid))) < 2e-6

    def test_bandwidth(self):
        x = np.arange(10.0)
        assert KernelCDF(x, 0.2).bandwidth == pytest.approx(0.2 * np.std(x, ddof=1))


class TestMonteCarloK:
    def test_unit_market_factor(self):
        spec = gamma_spec()
        est = kf_monte_carlo(
            lambda m, s: simulate_portfolio(spec, m, s).sample,
            GammaLaw(),
            lambda z: np.ones_like(z),
            10.0,
            10**5,
            np.linspace(0, 1200, 50),
            seed=4,
        )
        assert np.max(np.abs(est.k_star)) < 1e-12

    def test_constant_market_factor(self):
        spec = gamma_spec()
        m = 10**5
        est = kf_monte_carlo(
            lambda n, s: simulate_portfolio(spec, n, s).sample,
            GammaLaw(),
            lambda z: np.full_like(z, 1.2),
            10.0,
            m,
            np.linspace(0, 1200, 200),
            seed=5,
        )
        assert np.max(np.abs(est.k_star - 0.2 * (1 - est.f_star))) < 4 / math.sqrt(m)

    def test_market_k0(self):
        spec = gamma_spec()
        m = 10**5
        est = kf_monte_carlo(
            lambda n, s: simulate_portfolio(spec, n, s).sample, MARKET.z_law, MARKET.market_factor, 10.0, m, [-1e9], seed=6
        )
        # every U exceeds F*(-inf) = 0, so K* is the plain average of M(Z) - 1
        law = MARKET.z_law
        se = 1.2 * math.sqrt(law.mgf(0.2) / law.mgf(0.1) ** 2 - 1) / math.sqrt(m)
        assert abs(est.k_star[0] - 0.2) < 3 * se

    def test_tends_to_zero(self):
        spec = gamma_spec()
        est = kf_monte_carlo(
            lambda n, s: simulate_portfolio(spec, n, s).sample, MARKET.z_law, MARKET.market_factor, 10.0, 10**4, [1e9]
        )
        assert est.k_star[0] == 0.0

    def test_requires_sample_size(self):
        with pytest.raises(ValueError):
            kf_monte_carlo(lambda n, s: np.ones(n), GammaLaw(), np.exp, 1.0, 10, [0.0])


def test_price_bound_for_nondecreasing_w():
    # pi(I) = E{I(X) M(Z)} >= E{I(X)} E{M(Z)} for twenty random layers
    spec = gamma_spec()
    m = 10**6
    x = simulate_portfolio(spec, m, 12).sample
    rng = np.random.default_rng(13)
    fk = KernelCDF(x)
    u = np.clip(fk(x), 1e-300, 1 - 1e-16)
    mz = MARKET.market_factor(_copula_z(u, np.clip(rng.random(m), 1e-300, None), 10.0, MARKET.z_law))
    for _ in range(20):
        a1, a2 = np.sort(rng.uniform(0, 1200, 2))
        i = indemnity(LayerProgram(0.0, a1, a2), x)
        d = i * mz - i * 1.2
        assert d.mean() > -3 * d.std() / math.sqrt(m)


def test_margin_matches_direct_expectation():
    # linear K: margin of a layer equals gamma_re E{I(X)}
    loss = simulate_portfolio(gamma_spec(), 10**5, 14)
    ev = ContractEvaluator(KFunction.linear(0.2), loss)
    prog = LayerProgram(0.0, 450.0, 800.0)
    direct = 0.2 * indemnity(prog, loss.sample)
    assert abs(ev.margin(prog) - direct.mean()) < 4 * direct.std() / math.sqrt(loss.m)
