"""Initial phase-space densities compatible with the interface conditions.

Any bounded profile that is continuous off the interface and vanishes at
y = 0 satisfies the compatibility conditions at every bath temperature once
the constant T is added (the interface relations then reduce to T = T).
These classes are plain picklable callables so the Monte Carlo workers can
ship them across processes.
"""

from __future__ import annotations

import numpy as np


class Constant:
    """W0(y, k) = value; the equilibrium field when value = T."""

    def __init__(self, value):
        self.value = float(value)
        self.far_field = float(value)
        self.sup_norm = abs(float(value))

    def __call__(self, y, k=None):
        y = np.asarray(y, dtype=float)
        return np.full_like(y, self.value)


class CompactBump:
    """Smooth bump exp(1 - 1/(1 - u^2)) on |u| < 1, u = (y - center)/width.

    Infinitely differentiable, exactly zero outside the support, so it is
    interface-compatible whenever the support stays away from y = 0.
    """

    def __init__(self, center=1.5, width=1.0, amplitude=1.0, offset=0.0):
        self.center = float(center)
        self.width = float(width)
        self.amplitude = float(amplitude)
        self.offset = float(offset)
        self.far_field = float(offset)
        self.sup_norm = abs(amplitude) + abs(offset)

    def profile(self, y):
        u = (np.asarray(y, dtype=float) - self.center) / self.width
        out = np.zeros_like(u)
        inside = np.abs(u) < 1.0
        ui = u[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
        return self.amplitude * out

    def d2_profile(self, y):
        """Second derivative, by exact differentiation of the bump."""
        y = np.asarray(y, dtype=float)
        u = (y - self.center) / self.width
        out = np.zeros_like(u)
        inside = np.abs(u) < 0.999999
        ui = u[inside]
        w = 1.0 - ui * ui
        e = np.exp(1.0 - 1.0 / w)
        d1 = -2.0 * ui / (w * w)                  # d/du of the exponent
        d2 = (-2.0 * w - 8.0 * ui * ui) / w ** 3  # second derivative of the exponent
        out[inside] = e * (d1 * d1 + d2)
        return self.amplitude * out / self.width ** 2

    def __call__(self, y, k=None):
        return self.offset + self.profile(y)


class SeparableBump(CompactBump):
    """Compact y-bump modulated by a smooth even frequency profile."""

    def __init__(self, center=1.5, width=1.0, amplitude=1.0, offset=0.0,
                 k_harmonic=1):
        super().__init__(center, width, amplitude, offset)
        self.k_harmonic = int(k_harmonic)
        self.sup_norm = 2.0 * abs(amplitude) + abs(offset)

    def k_profile(self, k):
        return 1.0 + np.cos(2.0 * np.pi * self.k_harmonic * np.asarray(k, dtype=float))

    def k_average(self, y):
        """Integral of W0(y, .) - offset over the torus (the k-profile averages to 1)."""
        return self.profile(y)

    def __call__(self, y, k):
        return self.offset + self.profile(y) * self.k_profile(k)
