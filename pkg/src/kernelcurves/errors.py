"""Exception types shared across the package."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but carries no usable signal (e.g. zero total power)."""


class SolverError(RuntimeError):
    """Iterative solver failed to converge; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NumericalError(RuntimeError):
    """A linear-algebra or quadrature step failed beyond recoverable tolerance."""


class DataError(ValueError):
    """Dataset or kernel evaluation produced unusable values."""
