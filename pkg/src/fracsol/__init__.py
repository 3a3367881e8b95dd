"""Semiclassical soliton dynamics for the fractional nonlinear Schrodinger equation.

Spectral discretization, ground states, linearized operators, the Newtonian
trajectory equation, split-step propagation and modulation diagnostics.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BoundaryError,
    ConvergenceError,
    DomainError,
    FracsolError,
    GridMismatchError,
    NoSolitonError,
    NumericalError,
    PreconditionError,
)
from .ground_state import GroundStateResult, ground_state, ground_state_flow  # noqa: E402
from .spectral import Field, SpectralGrid  # noqa: E402

__all__ = [
    "BoundaryError", "ConvergenceError", "DomainError", "Field", "FracsolError", "GridMismatchError",
    "GroundStateResult", "NoSolitonError", "NumericalError", "PreconditionError", "SpectralGrid",
    "__version__", "ground_state", "ground_state_flow",
]
