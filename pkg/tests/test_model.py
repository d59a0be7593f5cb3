import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

from kinfrac import model
from kinfrac.errors import (BalanceViolation, DegenerateAbsorption,
                            DegenerateBeta, EvennessViolation, NonPositive,
                            ZeroRate)


def make_params(**kw):
    base = dict(beta=2.0, gamma0=1.0, r0=1.0, omega0p=1.0,
                interface=model.InterfaceCoefficients.constant(0.3, 0.5, 0.2),
                bath_temperature=1.0)
    base.update(kw)
    return model.ModelParams(**base)


class TestValidation:
    def test_constant_coefficients_valid(self):
        m = model.validate(make_params())
        assert m.interface.g_0 == pytest.approx(0.2)

    def test_balance_violation(self):
        coeffs = model.InterfaceCoefficients.constant(0.5, 0.5, 0.2)
        with pytest.raises(BalanceViolation):
            model.validate(make_params(interface=coeffs))

    def test_zero_absorption_balances_but_degenerate(self):
        # p+ + p- = 1 exactly, so no balance violation; the failure is the
        # vanishing absorption limit
        coeffs = model.InterfaceCoefficients.constant(0.5, 0.5, 0.0)
        with pytest.raises(DegenerateAbsorption):
            model.validate(make_params(interface=coeffs))

    def test_degenerate_beta(self):
        with pytest.raises(DegenerateBeta):
            model.validate(make_params(beta=1.0))

    @pytest.mark.parametrize("field", ["gamma0", "r0", "omega0p"])
    def test_nonpositive_rates(self, field):
        with pytest.raises(NonPositive):
            model.validate(make_params(**{field: 0.0}))

    def test_uneven_tables_rejected(self):
        k = np.linspace(-0.5, 0.5, 21)
        p_plus = 0.3 + 0.01 * k          # odd part -> not even
        coeffs = model.InterfaceCoefficients.from_tables(
            k, p_plus, 0.5 - 0.01 * k, np.full_like(k, 0.2))
        with pytest.raises(EvennessViolation):
            model.validate(make_params(interface=coeffs))

    def test_holder_bound_enforced(self):
        coeffs = model.InterfaceCoefficients.perturbed(0.3, 0.5, 0.2, 0.1, 1.0)
        # shrink the declared constant below the actual variation
        coeffs.holder_c0 = 1e-3
        with pytest.raises(BalanceViolation):
            model.validate(make_params(interface=coeffs))

    def test_balance_on_dense_grid(self, default_model):
        k = np.linspace(-0.5, 0.5, 10_001)
        coeffs = default_model.interface
        total = coeffs.p_plus(k) + coeffs.p_minus(k) + coeffs.g(k)
        assert np.max(np.abs(total - 1.0)) <= 1e-12


class TestElementary:
    def test_total_rate_peak(self, default_model):
        assert float(default_model.total_rate(0.5)) == pytest.approx(1.0)

    def test_total_rate_degenerate_at_zero(self, default_model):
        assert float(default_model.total_rate(0.0)) == 0.0

    def test_total_rate_beta_three_halves(self):
        m = model.validate(make_params(beta=1.5))
        # direct evaluation: sin(pi/4)^1.5
        assert float(m.total_rate(0.25)) == pytest.approx(0.5946035575013605,
                                                          abs=1e-12)

    def test_total_rate_even(self, default_model):
        k = np.linspace(1e-3, 0.5, 500)
        assert np.array_equal(default_model.total_rate(k),
                              default_model.total_rate(-k))

    def test_group_velocity_zero_frequency_limit(self, default_model):
        assert float(default_model.group_velocity(1e-12)) == pytest.approx(1.0)
        assert float(default_model.group_velocity(0.0)) == 0.0

    def test_group_velocity_band_edge(self, default_model):
        assert float(default_model.group_velocity(0.5)) == pytest.approx(0.0, abs=1e-15)

    def test_group_velocity_quarter(self):
        m = model.validate(make_params(omega0p=2.0))
        assert float(m.group_velocity(0.25)) == pytest.approx(math.sqrt(2.0))

    def test_group_velocity_odd(self, default_model):
        k = np.linspace(1e-3, 0.5, 500)
        assert np.array_equal(default_model.group_velocity(k),
                              -default_model.group_velocity(-k))

    def test_holding_time(self):
        m = model.validate(make_params(gamma0=0.5))
        # rate gamma0 * R = 0.5 * 1 at the band edge -> mean wait 2
        assert float(m.holding_time_mean(0.5)) == pytest.approx(2.0)
        m2 = model.validate(make_params(gamma0=1.0))
        assert float(m2.holding_time_mean(0.5)) == pytest.approx(1.0)

    def test_holding_time_zero_rate(self, default_model):
        with pytest.raises(ZeroRate):
            default_model.holding_time_mean(0.0)

    def test_kinematics_matches_parts(self, default_model, rng):
        k = rng.uniform(-0.5, 0.5, 1000)
        k = k[np.abs(k) > 1e-6]
        vel, tbar = default_model.kinematics(k)
        assert np.allclose(vel, default_model.group_velocity(k), rtol=1e-14)
        assert np.allclose(tbar, default_model.holding_time_mean(k), rtol=1e-14)

    def test_kinematics_matches_parts_mixture(self, mixture_model, rng):
        k = rng.uniform(0.01, 0.5, 500)
        vel, tbar = mixture_model.kinematics(k)
        assert np.allclose(tbar, mixture_model.holding_time_mean(k), rtol=1e-13)


class TestMomentumSampling:
    def test_chi_square_against_stationary_density(self, default_model, rng):
        draws = default_model.sample_momentum(0.0, rng, size=1_000_000)
        edges = np.linspace(0.0, 0.5, 81)
        probs = np.diff(default_model.stationary_cdf(edges))
        obs, _ = np.histogram(np.abs(draws), bins=edges)
        chi2 = float(np.sum((obs - draws.size * probs) ** 2
                            / (draws.size * probs)))
        p_value = 1.0 - stats.chi2.cdf(chi2, len(probs) - 1)
        assert p_value > 0.01

    def test_evenness_of_draws(self, default_model, rng):
        draws = default_model.sample_momentum(0.2, rng, size=1_000_000)
        mean_sign = float(np.mean(np.sign(draws)))
        assert abs(mean_sign) < 3.0 / math.sqrt(draws.size)

    def test_small_frequency_mass(self, default_model, rng):
        # quadrature oracle for P[|K| < eps]
        eps = 0.01
        num = quad(lambda k: np.sin(np.pi * k) ** 2, 0, eps)[0]
        den = quad(lambda k: np.sin(np.pi * k) ** 2, 0, 0.5)[0]
        target = num / den
        draws = default_model.sample_momentum(0.0, rng, size=4_000_000)
        emp = float(np.mean(np.abs(draws) < eps))
        sigma = math.sqrt(target / draws.size)
        assert abs(emp - target) < 4.0 * sigma

    def test_mixture_transition_depends_on_state(self, mixture_model):
        # secondary component weight grows with |sin(pi k)|: far-from-zero
        # momenta draw more of the faster-vanishing density
        rng1 = np.random.default_rng(5)
        rng2 = np.random.default_rng(5)
        near = mixture_model.sample_momentum(np.full(200_000, 0.02), rng1)
        far = mixture_model.sample_momentum(np.full(200_000, 0.5), rng2)
        assert np.mean(np.abs(far)) > np.mean(np.abs(near)) + 1e-3

    def test_cross_section_normalization(self, default_model, mixture_model):
        from kinfrac.quadrature import integrate_torus
        for m in (default_model, mixture_model):
            for k in np.linspace(0.005, 0.495, 100):
                total = integrate_torus(lambda kp: m.kernel.cross_section(k, kp))
                assert abs(total - 1.0) < 1e-10


class TestDerivedConstants:
    def test_r_bar_analytic(self, default_model):
        # int |sin(pi k)|^2 dk = 1/2
        assert default_model.levy_constants().r_bar == pytest.approx(0.5, abs=1e-12)

    def test_tau_bar(self, default_model):
        assert default_model.levy_constants().tau_bar == pytest.approx(2.0, abs=1e-11)

    def test_alpha_stable(self, default_model):
        assert default_model.levy_constants().alpha_stable == pytest.approx(1.5)
        m = model.validate(make_params(beta=1.25))
        assert m.levy_constants().alpha_stable == pytest.approx(1.8)

    def test_c_beta_matches_symbol_oracle(self, default_model):
        # the normalization is pinned by the defining integral; the check
        # evaluates it through an independent quadrature
        for theta in (0.5, 1.0, 2.0, 5.0):
            assert default_model.levy_symbol_check(theta) < 1e-8

    @pytest.mark.parametrize("beta", [1.25, 1.5, 2.0])
    def test_symbol_residuals_across_beta(self, beta):
        m = model.validate(make_params(beta=beta))
        for theta in (0.5, 1.0, 2.0, 5.0):
            assert m.levy_symbol_check(theta) < 1e-6

    def test_symbol_scaling_homogeneity(self, default_model):
        c = default_model.levy_constants()
        from kinfrac.quadrature import cosine_defect_integral
        i1 = cosine_defect_integral(c.c_beta, c.alpha_stable, 1.0)
        i2 = cosine_defect_integral(c.c_beta, c.alpha_stable, 2.0)
        assert i2 / i1 == pytest.approx(2.0 ** c.alpha_stable, rel=1e-6)

    def test_levy_symbol_form(self, default_model):
        c = default_model.levy_constants()
        assert c.levy_symbol(1.0) == pytest.approx(c.c_hat * c.tau_bar)
        assert c.levy_symbol(2.0) == pytest.approx(
            c.c_hat * c.tau_bar * 2.0 ** c.alpha_stable)

    def test_jump_kernel_power(self, default_model):
        c = default_model.levy_constants()
        assert c.jump_kernel(2.0) / c.jump_kernel(1.0) == pytest.approx(
            2.0 ** (-2.0 - 1.0 / 2.0))


@pytest.mark.slow
def test_flight_length_heavy_tail(default_model, rng):
    # with K stationary, P[|v tbar| > x] x**alpha approaches a constant;
    # the fitted tail exponent pins the scaling mechanism
    draws = default_model.sample_momentum(0.0, rng, size=10_000_000)
    lengths = default_model.mean_flight_length(draws)
    top = np.sort(lengths)[-300_000:]
    tail_prob = np.arange(top.size, 0, -1) / lengths.size
    sel = np.linspace(0, top.size - 2, 50).astype(int)
    slope = np.polyfit(np.log(top[sel]), np.log(tail_prob[sel]), 1)[0]
    alpha = default_model.levy_constants().alpha_stable
    assert abs(-slope - alpha) < 0.05
