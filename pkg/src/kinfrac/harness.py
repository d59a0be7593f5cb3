"""Desk-scale experiments: solver agreement, limit recovery, convergence trends.

Every experiment consumes an ``ExperimentSpec`` (model + ladders + seeds) and
emits ``ConvergenceTable`` rows carrying provenance (seed, sample count) and
explicit pass/fail assertions, so a run is reproducible bit for bit from the
spec.  Trend assertions (Kolmogorov-Smirnov distances shrinking along the
scale ladder, discrepancies contracting) are evaluated on a fixed seed
ladder, never re-randomized.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import json
import math

import numpy as np
from scipy.linalg import eigh

from . import fractional_pde, initialdata, kinetic_det, kinetic_mc, stable_limit
from .errors import InsufficientSamples
from .sampling import Estimate, Welford, map_chunks, tree_reduce


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    """Inputs shared by the experiments; probes stay off the interface."""

    model: object
    seed: int = 20240801
    workers: int = 1
    n_ladder: tuple = (100, 1000, 10_000)
    samples: int = 10_000
    t: float = 0.5
    probes_y: tuple = (0.4, 0.8, 1.5, -0.6, 2.2)
    probe_k: float = 0.2
    bump_center: float = 2.5
    bump_width: float = 2.0
    bump_amplitude: float = 1.0
    stable_a: float = 0.0078125
    reference_a: float = 0.01
    time_cap: float = 16.0
    pde_h: float = 1.0 / 256.0
    pde_dt: float = 1e-3
    pde_y_max: float = 8.0
    duhamel_cells: int = 512
    duhamel_y_max: float = 4.0

    def __post_init__(self):
        if any(abs(y) < 0.1 for y in self.probes_y):
            raise ValueError("probe points must stay at least 0.1 from the interface")
        if self.probe_k == 0.0:
            raise ValueError("probe frequency must be nonzero")

    def initial_bump(self):
        T = self.model.params.bath_temperature
        return initialdata.CompactBump(self.bump_center, self.bump_width,
                                       self.bump_amplitude, offset=T)


@dataclasses.dataclass
class ConvergenceTable:
    """Experiment rows plus named pass/fail assertions."""

    experiment: str
    rows: list = dataclasses.field(default_factory=list)
    checks: list = dataclasses.field(default_factory=list)

    def add_row(self, **kw):
        self.rows.append(kw)

    def check(self, name, passed, detail=""):
        self.checks.append({"name": name, "passed": bool(passed),
                            "detail": detail})
        return bool(passed)

    @property
    def all_passed(self):
        return all(c["passed"] for c in self.checks)

    def to_csv(self, path):
        keys = sorted({k for row in self.rows for k in row})
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)

    def to_json(self, path):
        payload = {"experiment": self.experiment, "rows": self.rows,
                   "checks": self.checks, "all_passed": self.all_passed}
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")


def ks_statistic(a, b, cap=None):
    """Two-sample sup-distance of empirical CDFs, censoring-consistent.

    Entries may be inf (censored); denominators use the full sample counts,
    and the sup runs over values below ``cap`` so identically censored
    samples compare coherently.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if cap is not None:
        keepa, keepb = a[a <= cap], b[b <= cap]
    else:
        keepa, keepb = a[np.isfinite(a)], b[np.isfinite(b)]
    pts = np.unique(np.concatenate([keepa, keepb]))
    fa = np.searchsorted(np.sort(keepa), pts, side="right") / a.size
    fb = np.searchsorted(np.sort(keepb), pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb))) if pts.size else 0.0


# ---------------------------------------------------------------------------
# stable index and diffusion-coefficient recovery
# ---------------------------------------------------------------------------

def stable_index_fit(spec, scale_n=None, samples=None, thetas=None):
    """Fit the scaled flight-sum characteristic function to scale*|theta|**alpha.

    Interface-free; returns the fitted index and scale, and closes the loop
    on the quadrature diffusion coefficient via scale / tau_bar.
    """
    model = spec.model
    scale_n = scale_n or max(spec.n_ladder)
    samples = samples or spec.samples
    if samples < 1000:
        raise InsufficientSamples("need at least 1000 samples for the fit")
    z = kinetic_mc.flight_sum_samples(1.0, spec.probe_k, scale_n, samples,
                                      model, spec.seed, workers=spec.workers)
    c = model.levy_constants()
    if thetas is None:
        # place the fit window where exp(-psi) is well away from 0 and 1
        scale_guess = c.c_hat * c.tau_bar
        thetas = np.geomspace((0.1 / scale_guess) ** (1 / c.alpha_stable),
                              (1.2 / scale_guess) ** (1 / c.alpha_stable), 9)
    phi = np.array([np.abs(np.mean(np.exp(1j * th * z))) for th in thetas])
    psi_hat = -np.log(phi)
    design = np.vstack([np.log(thetas), np.ones_like(thetas)]).T
    (alpha_hat, log_scale), *_ = np.linalg.lstsq(design, np.log(psi_hat),
                                                 rcond=None)
    scale_hat = math.exp(log_scale)
    c_hat_mc = scale_hat / c.tau_bar
    table = ConvergenceTable("stable_index_fit")
    table.add_row(scale_n=scale_n, samples=samples, seed=spec.seed,
                  alpha_hat=float(alpha_hat), scale_hat=scale_hat,
                  c_hat_mc=c_hat_mc, c_hat_quadrature=c.c_hat,
                  alpha_target=c.alpha_stable)
    table.check("alpha within 0.05",
                abs(alpha_hat - c.alpha_stable) < 0.05,
                f"alpha_hat={alpha_hat:.4f} target={c.alpha_stable:.4f}")
    table.check("scale consistent with quadrature c_hat within 10%",
                abs(c_hat_mc - c.c_hat) < 0.10 * c.c_hat,
                f"mc={c_hat_mc:.4f} quad={c.c_hat:.4f}")
    return table


# ---------------------------------------------------------------------------
# crossing-time convergence
# ---------------------------------------------------------------------------

def crossing_time_convergence(spec, y=None, reference_samples=None):
    """KS distances between scaled first-crossing laws and the stable limit.

    Kinetic crossing times are in chain units; the truncated-process
    reference (kinetic units) is converted through tau_bar.  The ladder runs
    on fixed seeds so the trend assertion is deterministic.
    """
    model = spec.model
    y = spec.probes_y[0] if y is None else y
    tau_bar = model.levy_constants().tau_bar
    cfg = stable_limit.RegularizedLevyConfig.from_model(model, a=spec.reference_a)
    ref_n = reference_samples or 4 * spec.samples
    ref = stable_limit.levy_crossing_samples(
        y, 1, ref_n, cfg, spec.seed + 999,
        time_cap=spec.time_cap * tau_bar, workers=spec.workers)
    u_ref = ref["u_time"][:, 0] / tau_bar

    table = ConvergenceTable("crossing_time_convergence")
    ks_values = []
    for i, n in enumerate(spec.n_ladder):
        cs = kinetic_mc.crossing_statistics(
            y, spec.probe_k, float(n), 1, spec.samples, model, spec.seed + i,
            time_cap=spec.time_cap, workers=spec.workers)
        s1 = cs["s_chain"][:, 0]
        z1 = cs["z_post"][:, 0]
        ks = ks_statistic(s1, u_ref, cap=spec.time_cap * 0.98)
        ks_values.append(ks)
        finite = np.isfinite(z1)
        sign_ok = bool(np.all(z1[finite] * np.sign(y) < 0))
        table.add_row(scale_n=n, samples=spec.samples, seed=spec.seed + i,
                      ks_distance=ks, censored=float(np.mean(~np.isfinite(s1))),
                      first_cross_sign_ok=sign_ok)
        table.check(f"post-crossing side flips (N={n})", sign_ok)
    for a, b in zip(ks_values[:-1], ks_values[1:]):
        table.check("KS strictly decreasing along ladder", b < a,
                    f"{a:.4f} -> {b:.4f}")
    return table


# ---------------------------------------------------------------------------
# macroscopic-jump property
# ---------------------------------------------------------------------------

def macroscopic_jump_check(spec, y=None, m_max=3, eps=0.05, calibrate_at=1000,
                           verify_at=(10_000, 100_000), samples=None,
                           quantile_margin=0.7):
    """Freeze C at the calibration scale so the small-flight event has
    probability below eps, then verify the same C at larger scales.

    The statistic is min over the first m_max crossings of the mean flight
    length at the crossing momentum, divided by N**(beta/(1+beta)).
    """
    model = spec.model
    y = spec.probes_y[0] if y is None else y
    beta = model.params.beta
    samples = samples or spec.samples

    def min_stat(n, seed, n_samples):
        cs = kinetic_mc.crossing_statistics(
            y, spec.probe_k, float(n), m_max, n_samples, model, seed,
            time_cap=4.0 * spec.time_cap, workers=spec.workers)
        fl = cs["flight_len"]
        # min over the observed crossings (lanes with none observed drop out)
        any_seen = np.isfinite(fl[:, 0])
        stat = np.nanmin(np.where(np.isfinite(fl), fl, np.nan), axis=1)
        return stat[any_seen] / n ** (beta / (1.0 + beta))

    table = ConvergenceTable("macroscopic_jump")
    cal = min_stat(calibrate_at, spec.seed, samples)
    # an empirical quantile comfortably below eps; margin keeps the frozen C
    # valid under resampling at the larger scales
    big_c = float(np.quantile(cal, quantile_margin * eps))
    p_cal = float(np.mean(cal <= big_c))
    table.add_row(scale_n=calibrate_at, samples=samples, seed=spec.seed,
                  frozen_c=big_c, probability=p_cal, eps=eps)
    table.check(f"calibration scale below eps (N={calibrate_at})", p_cal < eps,
                f"P={p_cal:.4f}")
    for j, n in enumerate(verify_at):
        stat = min_stat(n, spec.seed + 17 + j, samples)
        pn = float(np.mean(stat <= big_c))
        table.add_row(scale_n=n, samples=samples, seed=spec.seed + 17 + j,
                      frozen_c=big_c, probability=pn, eps=eps)
        table.check(f"frozen C still below eps (N={n})", pn < eps,
                    f"P={pn:.4f}")
    return table


# ---------------------------------------------------------------------------
# interface-draw coupling rate
# ---------------------------------------------------------------------------

def coupling_rate_check(spec, y=None, m_max=3, samples=None):
    """Mismatch rate between k-dependent and limiting interface draws.

    Common uniforms couple the two draws per crossing; a mismatch happens
    when the uniform lands between the k-dependent and limiting thresholds,
    so the rate is driven by |p(K) - p(0)| at the crossing momenta, which
    shrink with the scale.
    """
    model = spec.model
    coeffs = model.interface
    if coeffs.holder_c0 == 0.0:
        # constant coefficients: thresholds coincide, mismatch impossible
        table = ConvergenceTable("coupling_rate")
        table.add_row(note="constant coefficients: mismatch probability 0")
        table.check("zero mismatch for constant coefficients", True)
        return table
    y = spec.probes_y[0] if y is None else y
    samples = samples or spec.samples
    rng = np.random.default_rng(spec.seed + 4242)

    table = ConvergenceTable("coupling_rate")
    rates = []
    for i, n in enumerate(spec.n_ladder):
        cs = kinetic_mc.crossing_statistics(
            y, spec.probe_k, float(n), m_max, samples, model, spec.seed + i,
            time_cap=spec.time_cap, workers=spec.workers)
        kc = cs["k_cross"]
        seen = np.isfinite(kc)
        u = rng.random(kc.shape)
        pp_k = np.where(seen, coeffs.p_plus(np.where(seen, kc, 0.1)), np.nan)
        pm_k = np.where(seen, coeffs.p_minus(np.where(seen, kc, 0.1)), np.nan)
        draw_k = np.where(u < pp_k, 1, np.where(u > 1.0 - pm_k, -1, 0))
        draw_0 = np.where(u < coeffs.p_plus_0, 1,
                          np.where(u > 1.0 - coeffs.p_minus_0, -1, 0))
        mismatch_any = ((draw_k != draw_0) & seen).any(axis=1)
        rate = float(np.mean(mismatch_any))
        rates.append(rate)
        mean_k_mis = float(np.nanmean(np.abs(
            np.where((draw_k != draw_0) & seen, kc, np.nan))))
        mean_k_all = float(np.nanmean(np.abs(np.where(seen, kc, np.nan))))
        table.add_row(scale_n=n, samples=samples, seed=spec.seed + i,
                      mismatch_rate=rate, mean_abs_k_mismatch=mean_k_mis,
                      mean_abs_k_all=mean_k_all)
        if rate > 0:
            table.check(f"mismatches localize at small |k| (N={n})",
                        mean_k_mis < mean_k_all,
                        f"{mean_k_mis:.4f} < {mean_k_all:.4f}")
    logs = [(math.log(n), math.log(r)) for n, r in zip(spec.n_ladder, rates)
            if r > 0]
    fitted = float("nan")
    if len(logs) >= 2:
        xs, ys = zip(*logs)
        fitted = -float(np.polyfit(xs, ys, 1)[0])
        target = coeffs.holder_gamma / (model.params.beta + 1.0)
        table.add_row(fitted_decay_exponent=fitted, target_exponent=target)
        table.check("decay no slower than half the predicted rate",
                    fitted > 0.5 * target,
                    f"fitted={fitted:.3f} target={target:.3f}")
    for a, b in zip(rates[:-1], rates[1:]):
        table.check("mismatch rate decreasing along ladder", b < a,
                    f"{a:.4f} -> {b:.4f}")
    return table


# ---------------------------------------------------------------------------
# scattering-semigroup mixing and chain spectral gap
# ---------------------------------------------------------------------------

def mixing_check(model, harmonic=1, time_factors=(1, 2, 5, 10, 20, 50),
                 k_panels=10, k_points=10):
    """L1 distance of exp(tL) F from its flat average on a time ladder.

    F defaults to the first torus harmonic.  The generator is diagonalized
    once on the graded frequency grid (symmetrized by the quadrature
    weights); the decay toward the mean is algebraic, not exponential,
    because the scattering rate degenerates at k = 0.
    """
    from . import quadrature as quadmod

    k, w = quadmod.k_panel_grid(k_panels, k_points)
    pair = model.kernel.pair(k[:, None], k[None, :])
    rate = model.total_rate(k)
    sqw = np.sqrt(w)
    sym = sqw[:, None] * pair * sqw[None, :] - np.diag(rate)
    evals, evecs = eigh(sym)
    tau_bar = model.levy_constants().tau_bar

    f_re = np.cos(2.0 * np.pi * harmonic * k)
    f_im = np.sin(2.0 * np.pi * harmonic * k)
    mean_re = float(w @ f_re)
    mean_im = float(w @ f_im)

    def evolve(f, t):
        coefs = evecs.T @ (sqw * f)
        return (evecs @ (np.exp(evals * t) * coefs)) / sqw

    times = [fac * tau_bar for fac in time_factors]
    dist = []
    for t in times:
        g_re = evolve(f_re, t) - mean_re
        g_im = evolve(f_im, t) - mean_im
        dist.append(float(w @ np.hypot(g_re, g_im)))
    return {"times": np.array(times), "l1_distance": np.array(dist),
            "tau_bar": tau_bar}


def spectral_gap_estimate(model, k_panels=10, k_points=10):
    """Largest singular value of the momentum-chain transition operator on
    the orthocomplement of constants in L2 of the stationary measure."""
    from . import quadrature as quadmod

    k, w = quadmod.k_panel_grid(k_panels, k_points)
    pair = model.kernel.pair(k[:, None], k[None, :])
    rate = model.total_rate(k)
    sym = pair * np.sqrt(w[:, None] * w[None, :]) / np.sqrt(rate[:, None] * rate[None, :])
    evals = np.linalg.eigvalsh(sym)
    idx = np.argmin(np.abs(evals - 1.0))
    rest = np.delete(evals, idx)
    return float(np.max(np.abs(rest)))


# ---------------------------------------------------------------------------
# solver agreement
# ---------------------------------------------------------------------------

def oracle_equivalence(spec, samples=100_000, tolerance_pad=1e-3):
    """Kinetic MC at N = 1 against the deterministic mild-equation solver.

    Agreement band: 3 * stderr + 2 * grid error, the latter estimated by
    Richardson comparison of two resolutions.
    """
    model = spec.model
    T = model.params.bath_temperature
    bump = spec.initial_bump()
    grid = kinetic_det.PhaseGrid.build(spec.duhamel_y_max, spec.duhamel_cells,
                                       k_panels=6, k_points=6)
    coarse = kinetic_det.PhaseGrid.build(spec.duhamel_y_max,
                                         spec.duhamel_cells // 2,
                                         k_panels=6, k_points=6)
    shifted = lambda y, k: bump.profile(y)  # noqa: E731  (T-shifted data)
    sol = kinetic_det.duhamel_solve(shifted, spec.t, model, grid,
                                    tolerance=1e-9)
    sol_c = kinetic_det.duhamel_solve(shifted, spec.t, model, coarse,
                                      tolerance=1e-9, n_steps=16)
    k_idx = int(np.argmin(np.abs(grid.k_nodes - spec.probe_k)))
    k_probe = float(grid.k_nodes[k_idx])
    k_idx_c = int(np.argmin(np.abs(coarse.k_nodes - k_probe)))

    table = ConvergenceTable("oracle_equivalence")
    for j, y in enumerate(spec.probes_y):
        det = float(sol.eval_y(k_idx, np.array([y]))[0]) + T
        det_c = float(sol_c.eval_y(k_idx_c, np.array([y]))[0]) + T
        grid_err = abs(det - det_c)
        est = kinetic_mc.estimate_W_N(spec.t, y, k_probe, bump, samples,
                                      model, spec.seed + 100 + j,
                                      scale_n=1.0, workers=spec.workers)
        band = 3.0 * est.std_error + 2.0 * grid_err + tolerance_pad
        diff = abs(det - est.mean)
        table.add_row(probe_y=y, probe_k=k_probe, deterministic=det,
                      mc_mean=est.mean, mc_stderr=est.std_error,
                      grid_error=grid_err, samples=samples,
                      seed=spec.seed + 100 + j, difference=diff, band=band)
        table.check(f"probe y={y} agrees", diff < band,
                    f"|{det:.5f} - {est.mean:.5f}| = {diff:.2e} < {band:.2e}")
    return table


def three_way_agreement(spec, kinetic_n=10_000, samples=None):
    """Kinetic MC at large N, truncated-process MC, and the nonlocal grid
    solver at the same probes, with pairwise discrepancy bands."""
    model = spec.model
    T = model.params.bath_temperature
    samples = samples or spec.samples
    bump = spec.initial_bump()
    sup_w0 = bump.sup_norm

    cfg = stable_limit.RegularizedLevyConfig.from_model(model, a=spec.stable_a)
    sgrid = fractional_pde.SpatialGrid.build(spec.pde_y_max, spec.pde_h)
    op = fractional_pde.build_operator(sgrid, spec.stable_a, model,
                                       temperature=T, far_field=T)
    w0_grid = bump(sgrid.nodes)
    times, fields = fractional_pde.solve_trajectory(w0_grid, spec.t,
                                                    spec.pde_dt, op,
                                                    store_every=1 << 30)
    pde_final = fields[-1]

    table = ConvergenceTable("three_way_agreement")
    for j, y in enumerate(spec.probes_y):
        kin = kinetic_mc.estimate_W_N(spec.t, y, spec.probe_k, bump, samples,
                                      model, spec.seed + 300 + j,
                                      scale_n=float(kinetic_n),
                                      workers=spec.workers)
        stb = stable_limit.estimate_W_limit(spec.t, y, bump, samples, cfg,
                                            model, spec.seed + 600 + j,
                                            workers=spec.workers)
        pde = float(sgrid.interp(pde_final, np.array([y]), far_field=T)[0])
        pairs = {
            "kinetic_vs_stable": (kin.mean, stb.mean,
                                  math.hypot(kin.std_error, stb.std_error)),
            "kinetic_vs_pde": (kin.mean, pde, kin.std_error),
            "stable_vs_pde": (stb.mean, pde, stb.std_error),
        }
        row = {"probe_y": y, "kinetic": kin.mean, "kinetic_stderr": kin.std_error,
               "stable": stb.mean, "stable_stderr": stb.std_error, "pde": pde,
               "samples": samples, "seed": spec.seed + 300 + j,
               "kinetic_n": kinetic_n}
        triangle = (abs(kin.mean - pde)
                    <= abs(kin.mean - stb.mean) + abs(stb.mean - pde) + 1e-12)
        row["triangle_ok"] = triangle
        for name, (u, v, sigma) in pairs.items():
            band = 3.0 * sigma + 0.02 * sup_w0
            row[name] = abs(u - v)
            row[name + "_band"] = band
            table.check(f"{name} at y={y}", abs(u - v) < band,
                        f"diff={abs(u - v):.4f} band={band:.4f}")
        table.check(f"triangle inequality at y={y}", triangle)
        table.add_row(**row)
    return table


def scaling_limit_experiment(spec, samples=None):
    """Weak-convergence proxy: spatially averaged estimates against a test
    profile, along the scale ladder, versus the limit-process value.

    Origins are drawn from the normalized test profile (and uniform
    frequency), turning the averaged quantity into one Monte Carlo mean per
    scale; the limit route reuses the same origin draws via its own stream.
    """
    samples = samples or spec.samples
    bump = spec.initial_bump()
    test = initialdata.CompactBump(center=1.0, width=0.8, amplitude=1.0)
    mass = _ProfileOrigin(test).mass

    table = ConvergenceTable("scaling_limit")
    cfg = stable_limit.RegularizedLevyConfig.from_model(spec.model,
                                                        a=spec.stable_a)
    limit_est = _averaged_limit(spec, bump, test, samples, cfg)
    table.add_row(route="stable", value=limit_est.mean, stderr=limit_est.std_error,
                  samples=samples, seed=limit_est.seed, mass=mass)
    values = []
    for i, n in enumerate(spec.n_ladder):
        est = _averaged_kinetic(spec, bump, test, float(n), samples,
                                spec.seed + 30 + i)
        values.append(est)
        table.add_row(route="kinetic", scale_n=n, value=est.mean,
                      stderr=est.std_error, samples=samples, seed=est.seed,
                      mass=mass)
    sup_w0 = bump.sup_norm
    d_first = abs(values[0].mean - limit_est.mean)
    d_last = abs(values[-1].mean - limit_est.mean)
    sigma = math.hypot(values[-1].std_error, limit_est.std_error)
    table.check("largest scale agrees with limit",
                d_last < 3.0 * sigma + 0.02 * sup_w0,
                f"diff={d_last:.4f}")
    table.check("discrepancy shrinks along ladder",
                d_last < d_first + 2.0 * sigma,
                f"{d_first:.4f} -> {d_last:.4f}")
    return table


class _ProfileOrigin:
    """Draws path origins from a normalized compact profile (and uniform k)."""

    def __init__(self, test_bump):
        self.bump = test_bump
        ys = np.linspace(test_bump.center - test_bump.width,
                         test_bump.center + test_bump.width, 1 << 14)
        pdf = test_bump.profile(ys)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1])
                                               * np.diff(ys))])
        self.mass = float(cdf[-1])
        self._ys = ys
        self._cdf = cdf / cdf[-1]

    def draw(self, rng, n):
        y0 = np.interp(rng.random(n), self._cdf, self._ys)
        k0 = (rng.random(n) - 0.5)
        k0 = np.where(np.abs(k0) < 1e-12, 0.25, k0)
        return y0, k0


def _averaged_kinetic(spec, w0, test, scale_n, samples, seed):
    origin = _ProfileOrigin(test)
    ctx = kinetic_mc._WnContext(spec.model, spec.t, origin, spec.probe_k, w0,
                                scale_n, spec.model.params.bath_temperature)
    worker = functools.partial(kinetic_mc._wn_chunk_values, ctx)
    values = map_chunks(worker, samples, seed, workers=spec.workers)
    est = Estimate.from_welford(
        tree_reduce([Welford.from_values(v) for v in values]), seed)
    return Estimate(est.mean * origin.mass, est.std_error * origin.mass,
                    est.n_samples, seed)


def _averaged_limit(spec, w0, test, samples, cfg):
    origin = _ProfileOrigin(test)
    model = spec.model
    ctx = stable_limit._WLimitContext(cfg, spec.t, origin, w0,
                                      model.interface.p_plus_0,
                                      model.interface.p_minus_0,
                                      model.params.bath_temperature)
    worker = functools.partial(stable_limit._wlimit_chunk_values, ctx)
    values = map_chunks(worker, samples, spec.seed + 7000,
                        workers=spec.workers)
    est = Estimate.from_welford(
        tree_reduce([Welford.from_values(v) for v in values]),
        spec.seed + 7000)
    return Estimate(est.mean * origin.mass, est.std_error * origin.mass,
                    est.n_samples, est.seed)
