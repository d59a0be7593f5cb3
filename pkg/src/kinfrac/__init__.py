"""Cross-validating solvers for interface kinetic transport and its
fractional diffusion limit.

Four independent routes to the same observables: a kinetic Monte Carlo
engine for the momentum jump chain with
reflection/transmission/absorption at an interface, a deterministic
mild-equation (iterated-collision) solver, a regularized jump-process
Monte Carlo for the limiting stable dynamics, and a nonlocal grid solver
for the limit equation, plus an experiment harness that makes them agree.
"""

from .errors import KinfracError
from .model import InterfaceCoefficients, ModelParams, ValidatedModel, validate
from .sampling import Estimate

__all__ = [
    "Estimate",
    "InterfaceCoefficients",
    "KinfracError",
    "ModelParams",
    "ValidatedModel",
    "validate",
]

__version__ = "0.1.0"
