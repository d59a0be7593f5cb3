import math

import numpy as np
import pytest
from scipy import stats

from kinfrac import initialdata, model, stable_limit
from kinfrac.errors import InvalidOrigin


@pytest.fixture(scope="module")
def config(request):
    params = model.ModelParams(
        beta=2.0, gamma0=1.0, r0=1.0, omega0p=1.0,
        interface=model.InterfaceCoefficients.constant(0.3, 0.5, 0.2),
        bath_temperature=1.0)
    m = model.validate(params)
    return stable_limit.RegularizedLevyConfig.from_model(m, a=0.02), m


class TestConfig:
    def test_jump_rate_closed_form(self, default_model):
        c = default_model.levy_constants()
        a = 0.05
        cfg = stable_limit.RegularizedLevyConfig.from_model(default_model, a=a)
        expected = (2.0 * c.c_hat * c.c_beta * a ** -(1.0 + 0.5)
                    * 2.0 / (2.0 + 1.0))
        assert cfg.jump_rate == pytest.approx(expected, rel=1e-12)

    def test_budget_selection(self, default_model):
        cfg = stable_limit.RegularizedLevyConfig.from_model(
            default_model, jump_budget=5000.0, t_end=0.5)
        assert cfg.jump_rate * 0.5 == pytest.approx(5000.0, rel=1e-10)


class TestTruncatedJump:
    def test_median(self, config, rng):
        cfg, _ = config
        j = stable_limit.sample_truncated_jump(cfg, rng, size=400_000)
        target = cfg.a * 2.0 ** (1.0 / cfg.tail_index)
        med = float(np.median(np.abs(j)))
        assert med == pytest.approx(target, rel=0.01)

    def test_tail_probability(self, config, rng):
        cfg, _ = config
        n = 1_000_000
        j = stable_limit.sample_truncated_jump(cfg, rng, size=n)
        p = 2.0 ** (-cfg.tail_index)
        emp = float(np.mean(np.abs(j) > 2.0 * cfg.a))
        assert abs(emp - p) < 3.0 * math.sqrt(p * (1 - p) / n)

    def test_sign_symmetry(self, config, rng):
        cfg, _ = config
        j = stable_limit.sample_truncated_jump(cfg, rng, size=1_000_000)
        assert abs(float(np.mean(np.sign(j)))) < 3.0 / math.sqrt(j.size)

    def test_no_jump_below_truncation(self, config, rng):
        cfg, _ = config
        j = stable_limit.sample_truncated_jump(cfg, rng, size=100_000)
        assert np.min(np.abs(j)) >= cfg.a

    def test_mean_zero_no_compensation_needed(self, config, rng):
        cfg, _ = config
        j = stable_limit.sample_truncated_jump(cfg, rng, size=2_000_000)
        scale = np.std(j) / math.sqrt(j.size)
        assert abs(float(np.mean(j))) < 4.0 * scale


class TestExactStable:
    def test_characteristic_function(self, rng):
        dt, alpha, scale = 0.7, 1.5, 0.9
        x = stable_limit.sample_exact_stable_increment(dt, alpha, scale, rng,
                                                       size=1_000_000)
        target = math.exp(-dt * scale)
        emp = complex(np.mean(np.exp(1j * x)))
        sigma = math.sqrt((1 - target ** 2) / (2 * x.size))  # CF noise scale
        assert abs(emp.real - target) < 4.0 * sigma
        assert abs(emp.imag) < 4.0 * sigma

    def test_median_zero(self, rng):
        x = stable_limit.sample_exact_stable_increment(1.0, 1.5, 1.0, rng,
                                                       size=500_000)
        med = float(np.median(x))
        # median stderr ~ 1.25 sigma-equivalent / sqrt(n); use a loose band
        assert abs(med) < 0.01

    def test_self_similarity(self, rng):
        alpha = 1.5
        a1 = stable_limit.sample_exact_stable_increment(1.0, alpha, 1.0, rng,
                                                        size=200_000)
        a2 = stable_limit.sample_exact_stable_increment(2.0 ** alpha, alpha,
                                                        1.0, rng, size=200_000)
        ks = stats.ks_2samp(2.0 * a1, a2)
        assert ks.pvalue > 0.01


class TestSimulateEta:
    def test_invalid_origin(self, config, rng):
        cfg, m = config
        with pytest.raises(InvalidOrigin):
            stable_limit.simulate_eta(0.0, 1.0, cfg, m.interface, rng)

    def test_pure_absorption_kills_at_first_crossing(self, config, rng):
        cfg, _ = config
        coeffs = model.InterfaceCoefficients.constant(1e-12, 1e-12,
                                                      1 - 2e-12)
        killed_count = 0
        for _ in range(60):
            path = stable_limit.simulate_eta(0.2, 2.0, cfg, coeffs, rng)
            if path.killed:
                killed_count += 1
                assert len(path.crossings) == 1
            else:
                # survivors never changed side
                assert np.all(path.positions_after * 0.2 > 0)
        assert killed_count > 0

    def test_crossing_records_alternate(self, config, rng):
        cfg, m = config
        for _ in range(40):
            path = stable_limit.simulate_eta(0.5, 2.0, cfg, m.interface, rng)
            for m_idx, t, outcome in path.crossings:
                assert outcome in ("reflect", "transmit", "absorb")
            if path.killed:
                assert path.crossings[-1][2] == "absorb"
                assert path.kill_time == path.crossings[-1][1]

    def test_jump_count_poisson(self, config):
        cfg, _ = config
        lam = cfg.jump_rate * 0.5
        counts = []
        rng = np.random.default_rng(3)
        for _ in range(2000):
            path = stable_limit.simulate_eta(50.0, 0.5, cfg, _no_interface(),
                                             rng, record=True)
            counts.append(len(path.jump_times))
        counts = np.array(counts)
        assert abs(np.mean(counts) - lam) < 4.0 * math.sqrt(lam / counts.size)
        edges = stats.poisson.ppf(np.linspace(0.02, 0.98, 13), lam)
        edges = np.unique(np.concatenate([[-0.5], edges, [np.inf]]))
        probs = np.diff(stats.poisson.cdf(edges, lam))
        obs, _ = np.histogram(counts, bins=edges + 0.5)
        mask = probs > 1e-4
        chi2 = np.sum((obs[mask] - counts.size * probs[mask]) ** 2
                      / (counts.size * probs[mask]))
        p = 1.0 - stats.chi2.cdf(chi2, mask.sum() - 1)
        assert p > 0.01


def _no_interface():
    return model.InterfaceCoefficients.constant(1 - 2e-12, 1e-12, 1e-12)


class TestEstimator:
    def test_equilibrium_exact(self, config):
        cfg, m = config
        T = m.params.bath_temperature
        est = stable_limit.estimate_W_limit(0.5, 0.8, initialdata.Constant(T),
                                            2000, cfg, m, seed=4)
        assert est.mean == T
        assert est.std_error == 0.0

    def test_bound(self, config):
        cfg, m = config
        w0 = initialdata.CompactBump(1.0, 0.5, 0.6)
        est = stable_limit.estimate_W_limit(0.5, 0.8, w0, 3000, cfg, m,
                                            seed=5, temperature=0.0)
        assert abs(est.mean) <= 0.6

    def test_truncation_refinement_cauchy(self, default_model):
        # halving a moves the estimate by at most the combined noise plus a
        # truncation drift band
        w0 = initialdata.CompactBump(1.5, 1.0, 1.0, offset=1.0)
        beta = default_model.params.beta
        vals = {}
        for a in (0.04, 0.02):
            cfg = stable_limit.RegularizedLevyConfig.from_model(default_model,
                                                                a=a)
            vals[a] = stable_limit.estimate_W_limit(0.5, 0.8, w0, 20_000, cfg,
                                                    default_model, seed=6)
        drift = abs(vals[0.04].mean - vals[0.02].mean)
        sigma = math.hypot(vals[0.04].std_error, vals[0.02].std_error)
        band = 3.0 * sigma + 2.0 * 0.04 ** (1.0 / beta)
        assert drift < band

    def test_mirror_symmetry(self):
        # even initial data and p+ = p-: the construction is mirror symmetric
        coeffs = model.InterfaceCoefficients.constant(0.4, 0.4, 0.2)
        params = model.ModelParams(beta=2.0, gamma0=1.0, r0=1.0, omega0p=1.0,
                                   interface=coeffs, bath_temperature=1.0)
        m = model.validate(params)
        cfg = stable_limit.RegularizedLevyConfig.from_model(m, a=0.02)
        w0 = _EvenBump()
        plus = stable_limit.estimate_W_limit(0.5, 0.8, w0, 30_000, cfg, m,
                                             seed=7)
        minus = stable_limit.estimate_W_limit(0.5, -0.8, w0, 30_000, cfg, m,
                                              seed=7)
        sigma = math.hypot(plus.std_error, minus.std_error)
        assert abs(plus.mean - minus.mean) < 3.0 * sigma

    def test_survival_monotone_in_time(self, config):
        cfg, m = config
        kills = [stable_limit.survival_probability_limit(t, 0.5, 20_000, cfg,
                                                         m, seed=8).mean
                 for t in (0.2, 0.5, 1.0)]
        assert kills[0] <= kills[1] <= kills[2]

    def test_survival_monotone_in_absorption(self):
        vals = {}
        for g in (0.2, 0.4):
            coeffs = model.InterfaceCoefficients.constant(0.5 - g, 0.5, g)
            params = model.ModelParams(beta=2.0, gamma0=1.0, r0=1.0,
                                       omega0p=1.0, interface=coeffs,
                                       bath_temperature=1.0)
            m = model.validate(params)
            cfg = stable_limit.RegularizedLevyConfig.from_model(m, a=0.02)
            vals[g] = stable_limit.survival_probability_limit(
                0.5, 0.5, 20_000, cfg, m, seed=9).mean
        assert vals[0.4] >= vals[0.2]

    def test_worker_invariance(self, config):
        cfg, m = config
        w0 = initialdata.CompactBump(1.5, 1.0, 1.0, offset=1.0)
        kw = dict(t=0.5, y=0.8, w0_bar=w0, n_samples=4000, config=cfg,
                  model=m, seed=11)
        assert (stable_limit.estimate_W_limit(workers=1, **kw)
                == stable_limit.estimate_W_limit(workers=2, **kw))


class TestLevyCrossings:
    def test_first_crossing_sides(self, config):
        cfg, _ = config
        out = stable_limit.levy_crossing_samples(0.5, 2, 4000, cfg, seed=12,
                                                 time_cap=64.0)
        u = out["u_time"]
        z = out["z_post"]
        seen = np.isfinite(u[:, 0])
        assert seen.mean() > 0.9
        assert np.all(z[seen, 0] < 0.0)
        assert np.all(out["pre_sign"][seen, 0] > 0.0)
        both = np.isfinite(u).all(axis=1)
        assert np.all(np.diff(u[both], axis=1) > 0.0)
        assert np.all(z[both, 1] > 0.0)

    def test_marginal_matches_pure_transmission(self, config):
        # with p+ = 1 the interface process and the free process share the
        # time-t marginal
        cfg, _ = config
        t = 0.5
        free = stable_limit.eta_marginal_samples(0.4, t, cfg, 40_000, seed=13)
        coeffs = _no_interface()
        params = model.ModelParams(beta=2.0, gamma0=1.0, r0=1.0, omega0p=1.0,
                                   interface=coeffs, bath_temperature=0.0)
        m = model.validate(params)
        vals = stable_limit.estimate_W_limit(t, 0.4, _IdentityProfile(),
                                             40_000, cfg, m, seed=13,
                                             temperature=0.0)
        # same seed: identical raw paths, transmission keeps them intact
        assert vals.mean == pytest.approx(float(np.mean(free)), abs=1e-12)


class _EvenBump:
    def __call__(self, y, k=None):
        y = np.asarray(y, dtype=float)
        return 1.0 + np.exp(-np.abs(np.abs(y) - 1.2) ** 2 / 0.2)


class _IdentityProfile:
    def __call__(self, y):
        return np.asarray(y, dtype=float)
