"""Exception hierarchy shared by all rdpca modules.

The CLI maps these onto exit codes: usage problems exit with 1, bad input
data with 2 and numerical failures with 3.
"""


class RdpcaError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 3


class ArgumentError(RdpcaError, ValueError):
    """An argument violates a documented precondition."""

    exit_code = 1


class ShapeError(RdpcaError, ValueError):
    """Inputs live on different grids or have incompatible shapes."""

    exit_code = 2


class DomainError(RdpcaError, ValueError):
    """A value lies outside the domain of an operation (e.g. log of 0)."""

    exit_code = 2

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class RangeError(RdpcaError, OverflowError):
    """A result would overflow floating point range."""


class NumericError(RdpcaError, ArithmeticError):
    """A numerically degenerate quantity (zero median, zero variance...)."""


class TieError(NumericError):
    """Eigenvalues at the regularization split coincide."""


class DegenerateSubsetError(NumericError):
    """A trimmed covariance has too small a rank for the requested k."""


class ConvergenceError(NumericError):
    """An iteration did not converge; ``trace`` keeps the visited values."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class FitError(NumericError):
    """Every start of the robust fit failed."""


class SelectionError(NumericError):
    """No candidate regularization parameter produced a usable fit."""
