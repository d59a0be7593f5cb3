"""Quadrature helpers: torus integrals, singular tail moments, graded k-grids.

The scattering rate vanishes like |sin(pi k)|**beta at k = 0, and the jump
kernel decays like |y|**(-2-1/beta), so the integrals here need either a
split at the degenerate point or explicit oscillatory-tail handling.
"""

from __future__ import annotations

import contextlib
import warnings

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import IntegrationWarning, quad

from .errors import QuadratureFailure

TORUS_HALF = 0.5


@contextlib.contextmanager
def _quiet_quad():
    """Silence subdivision chatter where only the absolute error matters
    (cancellation-dominated integrands whose absolute tolerance is met)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        yield


def integrate_torus(f, rel_tol=1e-10):
    """Integrate f over the torus [-1/2, 1/2], splitting at the k = 0 degeneracy."""
    total = 0.0
    err = 0.0
    for lo, hi in ((-TORUS_HALF, 0.0), (0.0, TORUS_HALF)):
        val, abserr = quad(f, lo, hi, epsabs=0.0, epsrel=rel_tol, limit=200)
        total += val
        err += abserr
    if total != 0.0 and err > 10 * rel_tol * abs(total) + 1e-300:
        raise QuadratureFailure(
            f"torus integral error {err:.3e} exceeds tolerance for value {total:.6e}"
        )
    return total


def one_minus_cos_moment(alpha, rel_tol=1e-12):
    """Compute I(alpha) = integral over R of (1 - cos u) / |u|^(1+alpha) du.

    Valid for alpha in (0, 2).  The u^(1-alpha)/2 endpoint singularity on the
    head [0, 1] is integrated analytically through the Taylor series of
    1 - cos; the body [1, X] is smooth; the oscillatory tail beyond X uses the
    Fourier-weighted (QAWF) rule, the series-accelerated form of summing the
    integral period by period.
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    # 1 - cos u = u^2/2 - u^4/24 + u^6/720 - rem(u), rem = O(u^8)
    head = 1.0 / (2.0 * (2.0 - alpha)) - 1.0 / (24.0 * (4.0 - alpha)) \
        + 1.0 / (720.0 * (6.0 - alpha))
    # remainder is O(u^(7-alpha)), tiny: absolute tolerance is the right target
    # (the integrand itself is a catastrophic cancellation near 0, harmless in
    # absolute terms)
    with _quiet_quad():
        rem, e1 = quad(
            lambda u: (1.0 - np.cos(u) - u * u / 2.0 + u ** 4 / 24.0
                       - u ** 6 / 720.0) * u ** (-1.0 - alpha),
            1e-4, 1.0, epsabs=1e-16, epsrel=1e-9, limit=200)
    X = 40.0
    body, e2 = quad(lambda u: (1.0 - np.cos(u)) * u ** (-1.0 - alpha),
                    1.0, X, epsabs=0.0, epsrel=rel_tol, limit=400)
    # tail of the "1" part is exact; the cosine part oscillates
    tail_one = X ** (-alpha) / alpha
    tail_cos, e3 = quad(lambda u: u ** (-1.0 - alpha), X, np.inf,
                        weight="cos", wvar=1.0, epsabs=1e-14, limit=400)
    half = head + rem + body + tail_one - tail_cos
    err = e1 + e2 + e3
    if err > 100 * rel_tol * half:
        raise QuadratureFailure(f"tail moment error {err:.3e} too large")
    return 2.0 * half


def cosine_defect_integral(kernel_amplitude, alpha, theta, rel_tol=1e-10):
    """Integral over R of c |y|^(-1-alpha) (1 - cos(theta y)) dy, theta != 0.

    Independent evaluation path used to cross-check the kernel normalization:
    the endpoint singularity is removed by the substitution u = v**2 instead of
    a series, so this shares no algorithm with ``one_minus_cos_moment``.
    """
    t = abs(theta)
    if t == 0.0:
        return 0.0
    # after u = |theta| y the integral is t^alpha * c * (2 * half) with
    # half = int_0^inf (1 - cos u) u^(-1-alpha) du.  On the head write the
    # integrand as [(1 - cos u)/u^2] * u^(1-alpha) and let the QAWS rule carry
    # the algebraic endpoint weight u^(1-alpha) exactly.
    X = 9.0 * np.pi

    def smooth_part(u):
        # (1 - cos u) / u^2 with its removable singularity filled in
        if u < 1e-6:
            return 0.5 - u * u / 24.0
        return (1.0 - np.cos(u)) / (u * u)

    with _quiet_quad():
        head, _ = quad(smooth_part, 0.0, 1.0,
                       weight="alg", wvar=(1.0 - alpha, 0.0),
                       epsabs=1e-14, epsrel=rel_tol, limit=400)
        body, _ = quad(lambda u: (1.0 - np.cos(u)) * u ** (-1.0 - alpha), 1.0, X,
                       epsabs=1e-14, epsrel=rel_tol, limit=800)
    tail_one = X ** (-alpha) / alpha
    tail_cos, _ = quad(lambda u: u ** (-1.0 - alpha), X, np.inf,
                       weight="cos", wvar=1.0, epsabs=1e-14, limit=400)
    return 2.0 * kernel_amplitude * t ** alpha * (head + body + tail_one - tail_cos)


def gauss_panels(edges, n_points):
    """Composite Gauss-Legendre nodes/weights on consecutive panels."""
    base_x, base_w = leggauss(n_points)
    nodes = []
    weights = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        nodes.append(mid + half * base_x)
        weights.append(half * base_w)
    return np.concatenate(nodes), np.concatenate(weights)


def k_panel_grid(n_panels=8, n_points=8):
    """Symmetric quadrature grid on the torus, graded toward the k = 0 degeneracy.

    Panels halve geometrically toward 0 so integrands that vanish like |k|**beta
    (or weights that blow up near 0) are resolved; no node sits at k = 0 or at
    the torus edge.  Returns (nodes, weights) with nodes ascending and the grid
    exactly symmetric under k -> -k.
    """
    edges = TORUS_HALF * 2.0 ** (-np.arange(n_panels + 1, dtype=float))
    edges = np.concatenate([edges[::-1][:0], edges])  # descending from 1/2
    pos_edges = np.concatenate([[0.0], edges[::-1]])  # 0, ..., 1/2 ascending
    pos_nodes, pos_weights = gauss_panels(pos_edges, n_points)
    nodes = np.concatenate([-pos_nodes[::-1], pos_nodes])
    weights = np.concatenate([pos_weights[::-1], pos_weights])
    return nodes, weights
