"""Exception types shared across the toolkit.

The CLI maps these onto its exit-code contract (see kinfrac.cli).
"""


class KinfracError(Exception):
    """Base class for all toolkit errors."""


class ModelError(KinfracError):
    """Invalid physical model."""


class BalanceViolation(ModelError):
    """p_plus + p_minus + g != 1 somewhere on the torus."""


class DegenerateBeta(ModelError):
    """Scattering degeneracy exponent beta <= 1."""


class DegenerateAbsorption(ModelError):
    """Absorption coefficient vanishes in the zero-frequency limit."""


class NonPositive(ModelError):
    """A rate or coefficient that must be positive is not."""


class AsymmetricKernel(ModelError):
    """Pair scattering kernel fails R(k, k') == R(k', k)."""


class EvennessViolation(ModelError):
    """A coefficient or rate that must be even in k is not."""


class ZeroRate(KinfracError):
    """Total scattering rate is zero (k = 0): holding time undefined."""


class QuadratureFailure(KinfracError):
    """Adaptive quadrature did not reach the requested tolerance."""


class InvalidOrigin(KinfracError):
    """Path started on the interface (y = 0) or at the degenerate frequency (k = 0)."""


class NotConverged(KinfracError):
    """Iterative solver failed to meet its tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class TruncationTooFine(KinfracError):
    """Kernel truncation radius not resolvable on the grid (a < 2h)."""


class SingularSystem(KinfracError):
    """Implicit time-step system could not be factorized."""


class SupportTouchesInterface(KinfracError):
    """Weak-form test function support reaches into the excluded interface band."""


class InterpolationOutOfDomain(KinfracError):
    """Characteristic foot left the grid and no far-field closure was declared."""


class InsufficientSamples(KinfracError):
    """Monte Carlo sample count too small for the requested fit."""


class ConfigError(KinfracError):
    """Config file missing, malformed, or containing unknown keys."""


class UsageError(KinfracError):
    """Bad command-line usage."""
