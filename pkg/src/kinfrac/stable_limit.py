"""Simulation of the limiting jump process with interface rules.

The limit of the scaled kinetic paths is a symmetric stable process (index
alpha = 1 + 1/beta, spatial generator coefficient c_hat) that is reflected,
transmitted or killed when it jumps across y = 0, with the constant
zero-frequency limits (p_minus, p_plus, g_0) as outcome probabilities.  No
exact sampler exists for the interface process itself, so the workhorse is
the truncated-kernel approximation: jumps smaller than a are removed, which
leaves a compound Poisson process with rate

    Q(a) = c_hat * integral of the truncated kernel
         = 2 c_hat c_beta a**(-alpha) / alpha

and Pareto(|J| > x) = (a/x)**alpha jump magnitudes.  Because jump increments
are symmetric and i.i.d., reflection may be applied as a local relabeling
(the continuation from the mirrored landing point has the same law as the
mirrored continuation), so one raw path plus a running sign carries the full
interface process; crossings of the interface are exactly the sign-changing
jumps of the raw path, independent of the accumulated sign.

An exact symmetric-stable increment sampler (Chambers-Mallows-Stuck) is
provided for interface-free oracles.
"""

from __future__ import annotations

import dataclasses
import functools

import numpy as np

from .errors import InvalidOrigin
from .kinetic_mc import interface_outcome
from .sampling import CHUNK, Estimate, Welford, map_chunks, substream, tree_reduce


@dataclasses.dataclass(frozen=True)
class RegularizedLevyConfig:
    """Truncated-kernel process parameters."""

    a: float                       # truncation radius
    jump_rate: float               # Q(a), jumps per unit (kinetic) time
    tail_index: float              # alpha = 1 + 1/beta

    @classmethod
    def from_model(cls, model, a=None, jump_budget=1e4, t_end=1.0):
        """Build from model constants; if ``a`` is omitted it is chosen so a
        path of length ``t_end`` carries about ``jump_budget`` jumps."""
        c = model.levy_constants()
        alpha = c.alpha_stable
        if a is None:
            rate_needed = jump_budget / t_end
            a = (2.0 * c.c_hat * c.c_beta / (alpha * rate_needed)) ** (1.0 / alpha)
        a = float(a)
        if a <= 0.0:
            raise ValueError("truncation radius must be positive")
        q = 2.0 * c.c_hat * c.c_beta * a ** (-alpha) / alpha
        return cls(a=a, jump_rate=q, tail_index=alpha)


@dataclasses.dataclass
class LevyPath:
    """One recorded truncated-process realization with interface bookkeeping."""

    jump_times: np.ndarray
    positions_before: np.ndarray   # effective position just before each jump
    positions_after: np.ndarray    # effective position just after each jump
    crossings: list                # (m, time, outcome) tuples
    killed: bool
    kill_time: float


def sample_truncated_jump(config, rng, size=None):
    """Signed jump with Pareto magnitude: P[|J| > x] = (a/x)**alpha, x >= a."""
    u = rng.random(size)
    mag = config.a * u ** (-1.0 / config.tail_index)
    sign = rng.integers(0, 2, size=size, dtype=np.int8) * 2 - 1
    return sign * mag


def sample_exact_stable_increment(dt, alpha, scale, rng, size=None):
    """Exact symmetric alpha-stable increment with characteristic function
    exp(-dt * scale * |theta|**alpha), via the Chambers-Mallows-Stuck map."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if not 0.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (0, 2]")
    v = rng.uniform(-np.pi / 2.0, np.pi / 2.0, size)
    w = rng.standard_exponential(size)
    if alpha == 2.0:
        std = np.sqrt(2.0 * dt * scale)
        return std * rng.standard_normal(size)
    s = (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
         * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))
    return (dt * scale) ** (1.0 / alpha) * s


def simulate_eta(y, t_end, config, coeffs, rng, record=True):
    """Reference (scalar) simulation of the interface process up to t_end.

    Same-side jumps always land; straddling jumps resolve to transmit
    (land at y'), reflect (land at -y') or kill, with the constant
    coefficients (p_plus_0, p_minus_0, g_0).
    """
    if y == 0.0:
        raise InvalidOrigin("need y != 0")
    pp, pm = coeffs.p_plus_0, coeffs.p_minus_0
    t = 0.0
    pos = float(y)
    times, before, after = [], [], []
    crossings = []
    killed = False
    kill_time = float("inf")
    while True:
        t += rng.standard_exponential() / config.jump_rate
        if t > t_end:
            break
        jump = float(sample_truncated_jump(config, rng))
        target = pos + jump
        if pos * target < 0.0:
            outcome = interface_outcome(rng.random(), pp, pm)
            m = len(crossings) + 1
            if outcome == 0:
                crossings.append((m, t, "absorb"))
                killed = True
                kill_time = t
                if record:
                    times.append(t)
                    before.append(pos)
                    after.append(0.0)
                break
            if outcome == -1:
                target = -target
                crossings.append((m, t, "reflect"))
            else:
                crossings.append((m, t, "transmit"))
        if record:
            times.append(t)
            before.append(pos)
            after.append(target)
        pos = target
    return LevyPath(np.array(times), np.array(before), np.array(after),
                    crossings, killed, kill_time)


# ---------------------------------------------------------------------------
# vectorized chunk workers
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class _WLimitContext:
    config: RegularizedLevyConfig
    t: float
    y: float
    w0_bar: object
    p_plus: float
    p_minus: float
    temperature: float
    block: int = 2048


def _wlimit_chunk_values(ctx, chunk_index, chunk_size, seed):
    """Per-sample estimator values for the limit solution.

    The raw compound Poisson path is generated blockwise; its sign-changing
    jumps are the interface crossings whatever the outcomes, so the outcome
    draws fold in afterwards: the first absorbing crossing (if any) kills the
    path, otherwise the parity of reflections signs the final position.
    """
    rng = substream(seed, chunk_index)
    cfg = ctx.config
    if hasattr(ctx.y, "draw"):           # randomized origins for averaged runs
        pos = np.asarray(ctx.y.draw(rng, chunk_size)[0], dtype=float).copy()
    else:
        pos = np.full(chunk_size, ctx.y)
    n_jumps = rng.poisson(cfg.jump_rate * ctx.t, chunk_size)
    max_jumps = int(n_jumps.max()) if chunk_size else 0

    n_cross = np.zeros(chunk_size, dtype=np.int64)
    done_cols = 0
    while done_cols < max_jumps:
        b = min(ctx.block, max_jumps - done_cols)
        jumps = sample_truncated_jump(cfg, rng, size=(chunk_size, b))
        valid = (done_cols + np.arange(b))[None, :] < n_jumps[:, None]
        jumps = np.where(valid, jumps, 0.0)
        cums = pos[:, None] + np.cumsum(jumps, axis=1)
        prev = np.concatenate([pos[:, None], cums[:, :-1]], axis=1)
        n_cross += ((prev * cums < 0.0) & valid).sum(axis=1)
        pos = cums[:, -1]
        done_cols += b

    max_cross = int(n_cross.max()) if chunk_size else 0
    values = np.empty(chunk_size)
    if max_cross == 0:
        values[:] = ctx.w0_bar(pos)
        return values
    u = rng.random((chunk_size, max_cross))
    col = np.arange(max_cross)[None, :]
    live_cols = col < n_cross[:, None]
    absorb = live_cols & (u >= ctx.p_plus) & (u <= 1.0 - ctx.p_minus)
    killed = absorb.any(axis=1)
    # killed paths contribute T whatever happened before the kill; survivors
    # mirror once per reflection, so only the parity matters
    reflect = live_cols & (u > 1.0 - ctx.p_minus)
    sign = np.where(reflect.sum(axis=1) % 2 == 0, 1.0, -1.0)
    values[:] = np.where(killed, ctx.temperature, ctx.w0_bar(sign * pos))
    return values


def estimate_W_limit(t, y, w0_bar, n_samples, config, model, seed,
                     temperature=None, workers=1, chunk=CHUNK):
    """Monte Carlo of the limit solution at (t, y) through the truncated
    process: survivors contribute w0_bar at their endpoint, killed paths the
    bath temperature."""
    if y == 0.0:
        raise InvalidOrigin("need y != 0")
    if temperature is None:
        temperature = model.params.bath_temperature
    coeffs = model.interface
    ctx = _WLimitContext(config, float(t), float(y), w0_bar,
                         coeffs.p_plus_0, coeffs.p_minus_0, float(temperature))
    worker = functools.partial(_wlimit_chunk_values, ctx)
    values = map_chunks(worker, n_samples, seed, workers=workers, chunk=chunk)
    stats = tree_reduce([Welford.from_values(v) for v in values])
    return Estimate.from_welford(stats, seed)


def survival_probability_limit(t, y, n_samples, config, model, seed,
                               workers=1, chunk=CHUNK):
    """P[killed by time t] for the truncated interface process."""
    return estimate_W_limit(t, y, _zero_profile, n_samples, config, model,
                            seed, temperature=1.0, workers=workers, chunk=chunk)


def _zero_profile(y):
    return np.zeros_like(np.asarray(y, dtype=float))


@dataclasses.dataclass(frozen=True)
class _LevyCrossContext:
    config: RegularizedLevyConfig
    y: float
    m_max: int
    time_cap: float
    block: int = 2048


def _levy_crossing_chunk(ctx, chunk_index, chunk_size, seed):
    """First m_max sign-changing jumps (times and landing points) of the raw
    truncated process; censored at ``time_cap`` (inf / nan entries)."""
    rng = substream(seed, chunk_index)
    cfg = ctx.config

    u_time = np.full((chunk_size, ctx.m_max), np.inf)
    z_post = np.full((chunk_size, ctx.m_max), np.nan)
    pre_sign = np.full((chunk_size, ctx.m_max), np.nan)

    pos = np.full(chunk_size, ctx.y)
    tnow = np.zeros(chunk_size)
    found = np.zeros(chunk_size, dtype=np.int64)
    active = np.arange(chunk_size)
    # expected jumps left until the cap, for adaptive block growth
    cap_jumps = ctx.time_cap * cfg.jump_rate

    while active.size:
        na = active.size
        B = int(min(max(ctx.block, 4_000_000 // na),
                    max(ctx.block, cap_jumps * 1.25 + 1)))
        waits = rng.standard_exponential((na, B)) / cfg.jump_rate
        jumps = sample_truncated_jump(cfg, rng, size=(na, B))
        times = tnow[active, None] + np.cumsum(waits, axis=1)
        cums = pos[active, None] + np.cumsum(jumps, axis=1)
        prev = np.concatenate([pos[active, None], cums[:, :-1]], axis=1)
        straddle = prev * cums < 0.0

        col = np.arange(B)
        for _ in range(ctx.m_max):
            has = straddle.any(axis=1)
            if not has.any():
                break
            idx = np.argmax(straddle, axis=1)
            lanes = np.nonzero(has & (found[active] < ctx.m_max))[0]
            if lanes.size:
                gl = active[lanes]
                m = found[gl]
                li = idx[lanes]
                u_time[gl, m] = times[lanes, li]
                z_post[gl, m] = cums[lanes, li]
                pre_sign[gl, m] = np.sign(prev[lanes, li])
                found[gl] = m + 1
            straddle &= col[None, :] > idx[:, None]

        tnow[active] = times[:, -1]
        pos[active] = cums[:, -1]
        keep = (found[active] < ctx.m_max) & (tnow[active] < ctx.time_cap)
        active = active[keep]

    return {"u_time": u_time, "z_post": z_post, "pre_sign": pre_sign}


def levy_crossing_samples(y, m_max, n_samples, config, seed, time_cap=128.0,
                          workers=1, chunk=CHUNK):
    """Crossing times and post-crossing positions of the raw truncated
    process (the outcome draws do not affect crossing times)."""
    if y == 0.0:
        raise InvalidOrigin("need y != 0")
    ctx = _LevyCrossContext(config, float(y), int(m_max), float(time_cap))
    worker = functools.partial(_levy_crossing_chunk, ctx)
    parts = map_chunks(worker, n_samples, seed, workers=workers, chunk=chunk)
    return {key: np.concatenate([p[key] for p in parts], axis=0)
            for key in parts[0]}


def eta_marginal_samples(y, t, config, n_samples, seed, workers=1, chunk=CHUNK):
    """Samples of the raw (no interface) truncated process at time t."""
    ctx = _WLimitContext(config, float(t), float(y), _identity, 1.0, 0.0, 0.0)
    worker = functools.partial(_eta_marginal_chunk, ctx)
    parts = map_chunks(worker, n_samples, seed, workers=workers, chunk=chunk)
    return np.concatenate(parts)


def _identity(y):
    return np.asarray(y, dtype=float)


def _eta_marginal_chunk(ctx, chunk_index, chunk_size, seed):
    rng = substream(seed, chunk_index)
    cfg = ctx.config
    n_jumps = rng.poisson(cfg.jump_rate * ctx.t, chunk_size)
    max_jumps = int(n_jumps.max()) if chunk_size else 0
    pos = np.full(chunk_size, ctx.y)
    done = 0
    while done < max_jumps:
        b = min(ctx.block, max_jumps - done)
        jumps = sample_truncated_jump(cfg, rng, size=(chunk_size, b))
        valid = (done + np.arange(b))[None, :] < n_jumps[:, None]
        pos += np.where(valid, jumps, 0.0).sum(axis=1)
        done += b
    return pos
