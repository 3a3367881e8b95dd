"""Exception and warning types shared across the package."""


class FracsolError(Exception):
    """Base class for all package errors."""


class DomainError(FracsolError, ValueError):
    """A parameter lies outside its admissible range."""


class GridMismatchError(FracsolError, ValueError):
    """Two fields live on different grids."""


class PreconditionError(FracsolError, ValueError):
    """An input violates the precondition of an operation."""


class UnsupportedError(FracsolError, NotImplementedError):
    """The operation is not available for this configuration."""


class NumericalError(FracsolError, RuntimeError):
    """A numerical procedure failed; ``diagnostics`` carries the details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConvergenceError(NumericalError):
    """An iteration did not converge within its budget."""


class PositivityError(NumericalError):
    """A profile expected to be positive has negative entries."""


class StagnationError(NumericalError):
    """A descent method cannot make progress any more."""


class BoundaryError(NumericalError):
    """The solution reached the edge of the periodic box."""


class NoSolitonError(NumericalError):
    """No localized soliton could be detected in a field."""


class NonLipschitzError(NumericalError):
    """Adaptive integration stalled where the vector field is not Lipschitz."""


class AliasingWarning(RuntimeWarning):
    """A resampled field is not resolved by the grid."""


class WindowingWarning(RuntimeWarning):
    """A field does not decay inside the evaluation window."""
