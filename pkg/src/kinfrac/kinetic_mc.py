"""Monte Carlo engine for the momentum jump chain with interface rules.

A path alternates exponential holding flights (duration tbar(K) * Exp(1),
velocity -vbar(K)) with momentum refreshes drawn from the scattering
cross-section.  When a flight straddles y = 0 the interface acts at the exact
crossing instant with the coefficients evaluated at the momentum carried
during the crossing flight: reflection mirrors all subsequent motion
(equivalently, flips the running sign factor), transmission continues
unchanged, absorption freezes the path, which from then on contributes the
bath temperature to the estimator.

Under a scaling parameter N the engine runs the raw chain to physical time
N * t and divides spatial displacements by N**(beta/(1+beta)); crossing
bookkeeping happens in raw coordinates where the interface sits at 0 for
every N.

Two layers implement the same dynamics: a scalar reference layer
(``advance_one_flight`` / ``detect_crossing`` / ``apply_interface`` /
``simulate_path``) used for unit tests and path recording, and chunked
vectorized workers behind ``estimate_W_N`` / ``crossing_statistics`` that
stream flights without storing paths.
"""

from __future__ import annotations

import dataclasses
import functools

import numpy as np

from .errors import InvalidOrigin
from .sampling import CHUNK, Estimate, Welford, map_chunks, substream, tree_reduce

OUTCOME_TRANSMIT = 1
OUTCOME_REFLECT = -1
OUTCOME_ABSORB = 0
_OUTCOME_NAMES = {OUTCOME_TRANSMIT: "transmit", OUTCOME_REFLECT: "reflect",
                  OUTCOME_ABSORB: "absorb"}


# ---------------------------------------------------------------------------
# reference layer
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class ChainState:
    """Mutable per-path state; ``k`` is the raw chain momentum, the momentum
    in effect is sign_factor * k."""

    k: float
    n: int = 0
    physical_time: float = 0.0
    position: float = 0.0          # raw (unscaled) effective position
    sign_factor: int = 1
    absorbed: bool = False
    absorption_time: float = float("inf")


@dataclasses.dataclass(frozen=True)
class CrossingEvent:
    index: int                     # m = 1, 2, ...
    continuous_time: float         # crossing instant (kinetic units)
    momentum_at_crossing: float    # raw momentum of the crossing flight
    outcome: str                   # 'reflect' | 'transmit' | 'absorb'
    jump_index: int                # chain index of the first jump after the crossing
    post_step_time: float          # that jump's time (kinetic units)
    position_at_post_step: float   # scaled effective position at that jump


@dataclasses.dataclass
class KineticPath:
    """One recorded realization in scaled coordinates."""

    times: np.ndarray              # jump times, kinetic units, starting at 0
    momenta: np.ndarray            # effective momentum after each jump
    positions: np.ndarray          # scaled effective position at each jump
    crossings: list
    scale_n: float
    origin: tuple
    absorbed: bool
    absorption_time: float


def detect_crossing(y_start, velocity, duration):
    """Exact time in (0, duration] at which the segment hits y = 0, else None.

    A flight landing exactly on 0 counts as a crossing at the segment end.
    """
    if y_start == 0.0 or velocity == 0.0:
        return None
    s = -y_start / velocity
    if 0.0 < s <= duration:
        return s
    return None


def interface_outcome(u, p_plus_k, p_minus_k):
    """Map a uniform draw to an outcome: transmit below p+, reflect above
    1 - p-, absorb in the middle band (whose width is the absorption
    probability).  The layout makes absorption events nest when absorption
    grows at transmission's expense under common random numbers."""
    if u < p_plus_k:
        return OUTCOME_TRANSMIT
    if u > 1.0 - p_minus_k:
        return OUTCOME_REFLECT
    return OUTCOME_ABSORB


def apply_interface(momentum_at_crossing, coeffs, rng):
    """Draw the crossing outcome with probabilities evaluated at the momentum
    carried during the crossing flight."""
    u = rng.random()
    return interface_outcome(u, float(coeffs.p_plus(momentum_at_crossing)),
                             float(coeffs.p_minus(momentum_at_crossing)))


def advance_one_flight(state, model, rng):
    """One interface-free flight: advance time and position, refresh momentum.

    The position moves by -vbar(K) * tbar(K) * tau in effective coordinates
    (velocity evaluated at the effective momentum sign_factor * k).
    """
    if state.absorbed:
        raise InvalidOrigin("path is absorbed; no further flights")
    tau = rng.standard_exponential()
    tbar = float(model.holding_time_mean(state.k))
    duration = tbar * tau
    velocity = -state.sign_factor * float(model.group_velocity(state.k))
    state.position += velocity * duration
    state.physical_time += duration
    state.k = float(model.sample_momentum(state.k, rng))
    state.n += 1
    return state, (tau, duration, velocity)


def simulate_path(y, k, t_end, scale_n, model, rng, max_crossings=None):
    """Simulate one scaled path with interface rules up to kinetic time t_end.

    Raw chain run to physical time scale_n * t_end; spatial output carries the
    factor scale_n**(-beta/(1+beta)).  Returns the full event record.
    """
    if y == 0.0 or k == 0.0:
        raise InvalidOrigin("need y != 0 and k != 0")
    beta = model.params.beta
    space_scale = scale_n ** (beta / (1.0 + beta))
    horizon = scale_n * t_end
    coeffs = model.interface

    state = ChainState(k=float(k), position=float(y) * space_scale)
    times = [0.0]
    momenta = [state.sign_factor * state.k]
    positions = [float(y)]
    crossings = []
    pending = None                 # crossing awaiting its post-step record

    while state.physical_time < horizon and not state.absorbed:
        tau = rng.standard_exponential()
        tbar = float(model.holding_time_mean(state.k))
        duration = tbar * tau
        k_flight = state.k
        velocity = -state.sign_factor * float(model.group_velocity(k_flight))
        remaining = min(duration, horizon - state.physical_time)
        s = detect_crossing(state.position, velocity, remaining)
        if s is not None:
            state.physical_time += s
            state.position = 0.0
            outcome = apply_interface(k_flight, coeffs, rng)
            m = len(crossings) + 1
            t_cross = state.physical_time / scale_n
            if outcome == OUTCOME_ABSORB:
                state.absorbed = True
                state.absorption_time = t_cross
                crossings.append(CrossingEvent(m, t_cross, k_flight, "absorb",
                                               state.n + 1, t_cross, 0.0))
                break
            if outcome == OUTCOME_REFLECT:
                state.sign_factor = -state.sign_factor
                velocity = -velocity
            pending = (m, t_cross, k_flight, _OUTCOME_NAMES[outcome])
            remaining = min(duration - s, horizon - state.physical_time)
        state.position += velocity * remaining
        state.physical_time += remaining
        if state.physical_time >= horizon:
            break
        state.k = float(model.sample_momentum(state.k, rng))
        state.n += 1
        t_jump = state.physical_time / scale_n
        times.append(t_jump)
        momenta.append(state.sign_factor * state.k)
        positions.append(state.position / space_scale)
        if pending is not None:
            m, t_cross, k_cross, name = pending
            crossings.append(CrossingEvent(m, t_cross, k_cross, name, state.n,
                                           t_jump, state.position / space_scale))
            pending = None
        if max_crossings is not None and len(crossings) >= max_crossings:
            break

    return KineticPath(np.array(times), np.array(momenta), np.array(positions),
                       crossings, scale_n, (float(y), float(k)),
                       state.absorbed, state.absorption_time)


# ---------------------------------------------------------------------------
# vectorized chunk workers
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class _WnContext:
    model: object
    t: float
    y: float
    k0: float
    w0: object
    scale_n: float
    temperature: float


def _wn_chunk_values(ctx, chunk_index, chunk_size, seed):
    """Per-sample estimator values W0(Y_N(t), K_N(t)) on survivors, T on
    absorbed paths, for one chunk.  Flightwise: every iteration advances all
    live paths by one flight, resolving interface hits at exact times."""
    model = ctx.model
    rng = substream(seed, chunk_index)
    beta = model.params.beta
    space_scale = ctx.scale_n ** (beta / (1.0 + beta))
    horizon = ctx.scale_n * ctx.t
    coeffs = model.interface
    mixture = model.kernel.mixture_weight != 0.0

    if hasattr(ctx.y, "draw"):           # randomized origins for averaged runs
        y0, k0 = ctx.y.draw(rng, chunk_size)
        pos = np.asarray(y0, dtype=float) * space_scale
        kr = np.asarray(k0, dtype=float).copy()
    else:
        pos = np.full(chunk_size, ctx.y * space_scale)
        kr = np.full(chunk_size, ctx.k0)
    sgn = np.ones(chunk_size)
    tph = np.zeros(chunk_size)
    values = np.empty(chunk_size)
    alive = np.arange(chunk_size)

    while alive.size:
        n = alive.size
        tau = rng.standard_exponential(n)
        u_iface = rng.random(n)
        k_next = model.sample_momentum(kr[alive] if mixture else 0.0, rng, size=n)

        ka = kr[alive]
        vel0, tbar = model.kinematics(ka)
        dur = tbar * tau
        vel = -sgn[alive] * vel0
        p0 = pos[alive]
        end = p0 + vel * dur
        rem_h = horizon - tph[alive]
        hit_h = dur >= rem_h
        with np.errstate(divide="ignore", invalid="ignore"):
            s_cross = np.where(vel != 0.0, -p0 / vel, np.inf)
        crossing = ((p0 * end < 0.0) | ((end == 0.0) & (p0 != 0.0))) \
            & (s_cross < rem_h)

        pp = coeffs.p_plus(ka)
        pm = coeffs.p_minus(ka)
        transmit = crossing & (u_iface < pp)
        reflect = crossing & (u_iface > 1.0 - pm)
        absorb = crossing & ~transmit & ~reflect

        new_sgn = np.where(reflect, -sgn[alive], sgn[alive])
        # mirrored continuation: reflected lanes end the flight at -end
        end_eff = np.where(reflect, -end, end)
        pos_at_h = p0 + vel * rem_h
        pos_at_h = np.where(reflect, -pos_at_h, pos_at_h)

        finish_h = hit_h & ~absorb
        idx_fin = alive[finish_h]
        if idx_fin.size:
            y_eval = pos_at_h[finish_h] / space_scale
            k_eval = new_sgn[finish_h] * ka[finish_h]
            values[idx_fin] = ctx.w0(y_eval, k_eval)
        idx_abs = alive[absorb]
        if idx_abs.size:
            values[idx_abs] = ctx.temperature

        cont = ~hit_h & ~absorb
        il = alive[cont]
        pos[il] = end_eff[cont]
        sgn[il] = new_sgn[cont]
        tph[il] = tph[il] + dur[cont]
        kr[il] = k_next[cont]
        alive = il
    return values


def estimate_W_N(t, y, k, w0, n_samples, model, seed, scale_n=1.0,
                 temperature=None, workers=1, chunk=CHUNK):
    """Monte Carlo estimate of the kinetic solution at (t, y, k), scale N.

    ``w0`` is a bounded callable on (y, k), continuous off the interface.
    Absorbed paths contribute ``temperature`` (default: the model's bath
    temperature).  Reproducible: the sample multiset depends only on
    (seed, n_samples), not on the worker count.
    """
    if y == 0.0 or k == 0.0:
        raise InvalidOrigin("need y != 0 and k != 0")
    if temperature is None:
        temperature = model.params.bath_temperature
    ctx = _WnContext(model, float(t), float(y), float(k), w0, float(scale_n),
                     float(temperature))
    worker = functools.partial(_wn_chunk_values, ctx)
    values = map_chunks(worker, n_samples, seed, workers=workers, chunk=chunk)
    stats = tree_reduce([Welford.from_values(v) for v in values])
    return Estimate.from_welford(stats, seed)


def survival_probability(t, y, k, n_samples, model, seed, scale_n=1.0,
                         workers=1, chunk=CHUNK):
    """P[path absorbed by kinetic time t], via the representation with
    W0 = 0 and unit bath temperature (common random numbers with
    ``estimate_W_N`` for the same seed)."""
    zero = _Zero()
    return estimate_W_N(t, y, k, zero, n_samples, model, seed,
                        scale_n=scale_n, temperature=1.0, workers=workers,
                        chunk=chunk)


class _Zero:
    def __call__(self, y, k):
        return np.zeros_like(np.asarray(y, dtype=float))


# ---------------------------------------------------------------------------
# crossing statistics (no interface folding: raw chain sign changes)
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class _CrossContext:
    model: object
    y: float
    k0: float
    scale_n: float
    m_max: int
    time_cap: float                # chain-time cap; unfound crossings -> inf
    block: int = 2048


def _crossing_chunk(ctx, chunk_index, chunk_size, seed):
    """First m_max interface crossings of the raw scaled walk per sample.

    Returns arrays (chunk_size, m_max): chain crossing times s/N, continuous
    crossing times, scaled post-crossing positions, raw momenta of the
    crossing flights, and their mean flight lengths.  Requires the product
    kernel (momenta i.i.d. after the first step), which lets whole blocks of
    flights be generated at once.
    """
    model = ctx.model
    if model.kernel.mixture_weight != 0.0:
        raise NotImplementedError("crossing statistics require the product kernel")
    rng = substream(seed, chunk_index)
    beta = model.params.beta
    N = ctx.scale_n
    space_scale = N ** (beta / (1.0 + beta))

    s_chain = np.full((chunk_size, ctx.m_max), np.inf)
    s_cont = np.full((chunk_size, ctx.m_max), np.inf)
    z_post = np.full((chunk_size, ctx.m_max), np.nan)
    k_cross = np.full((chunk_size, ctx.m_max), np.nan)
    flight_len = np.full((chunk_size, ctx.m_max), np.nan)

    pos = np.full(chunk_size, ctx.y * space_scale)
    steps = np.zeros(chunk_size, dtype=np.int64)
    found = np.zeros(chunk_size, dtype=np.int64)
    active = np.arange(chunk_size)
    step_cap = int(np.ceil(ctx.time_cap * N))
    first = True

    while active.size:
        na = active.size
        # grow blocks as lanes retire so straggler paths do not pay
        # per-iteration overhead hundreds of times
        B = int(min(max(ctx.block, 4_000_000 // na),
                    max(ctx.block, step_cap - steps[active].min() + 1)))
        K = model.sample_momentum(0.0, rng, size=(na, B))
        if first:
            K[:, 0] = ctx.k0
            first = False
        tau = rng.standard_exponential((na, B))
        vel0, tbar = model.kinematics(K)
        b = vel0 * tbar
        incr = -b * tau
        cums = pos[active, None] + np.cumsum(incr, axis=1)
        prev = np.concatenate([pos[active, None], cums[:, :-1]], axis=1)
        straddle = (prev * cums < 0.0) | ((cums == 0.0) & (prev != 0.0))

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
                n_jump = steps[gl] + li + 1
                s_chain[gl, m] = n_jump / N
                frac = prev[lanes, li] / (prev[lanes, li] - cums[lanes, li])
                s_cont[gl, m] = (steps[gl] + li + frac) / N
                z_post[gl, m] = cums[lanes, li] / space_scale
                k_cross[gl, m] = K[lanes, li]
                flight_len[gl, m] = np.abs(b[lanes, li])
                found[gl] = m + 1
            straddle &= col[None, :] > idx[:, None]

        steps[active] += B
        pos[active] = cums[:, -1]
        keep = (found[active] < ctx.m_max) & (steps[active] < step_cap)
        active = active[keep]

    return {"s_chain": s_chain, "s_cont": s_cont, "z_post": z_post,
            "k_cross": k_cross, "flight_len": flight_len}


def crossing_statistics(y, k, scale_n, m_max, n_samples, model, seed,
                        time_cap=64.0, workers=1, chunk=CHUNK):
    """Per-sample first m_max crossing records of the scaled raw walk.

    Censoring: crossings not observed by chain time ``time_cap`` are reported
    as inf times / nan marks; the cap applies identically across scales so
    trend comparisons remain coherent.
    """
    if y == 0.0:
        raise InvalidOrigin("need y != 0")
    ctx = _CrossContext(model, float(y), float(k), float(scale_n), int(m_max),
                        float(time_cap))
    worker = functools.partial(_crossing_chunk, ctx)
    parts = map_chunks(worker, n_samples, seed, workers=workers, chunk=chunk)
    return {key: np.concatenate([p[key] for p in parts], axis=0)
            for key in parts[0]}


# ---------------------------------------------------------------------------
# interface-free flight sums (characteristic-function experiments)
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class _SumContext:
    model: object
    k0: float
    scale_n: float
    t: float
    block: int = 4096


def _flight_sum_chunk(ctx, chunk_index, chunk_size, seed):
    """Z_N(t; 0, k0) samples: scaled position of the interface-free walk after
    [N t] flights (product kernel)."""
    model = ctx.model
    if model.kernel.mixture_weight != 0.0:
        raise NotImplementedError("flight sums require the product kernel")
    rng = substream(seed, chunk_index)
    beta = model.params.beta
    steps = int(ctx.scale_n * ctx.t)
    acc = np.zeros(chunk_size)
    done = 0
    first = True
    while done < steps:
        B = min(ctx.block, steps - done)
        K = model.sample_momentum(0.0, rng, size=(chunk_size, B))
        if first:
            K[:, 0] = ctx.k0
            first = False
        tau = rng.standard_exponential((chunk_size, B))
        vel0, tbar = model.kinematics(K)
        acc += (vel0 * tbar * tau).sum(axis=1)
        done += B
    return -acc / ctx.scale_n ** (beta / (1.0 + beta))


def flight_sum_samples(t, k, scale_n, n_samples, model, seed, workers=1,
                       chunk=CHUNK):
    """Samples of the scaled interface-free displacement Z_N(t; 0, k)."""
    ctx = _SumContext(model, float(k), float(scale_n), float(t))
    worker = functools.partial(_flight_sum_chunk, ctx)
    parts = map_chunks(worker, n_samples, seed, workers=workers, chunk=chunk)
    return np.concatenate(parts)
