"""Exception types raised across the package."""


class RenormStatError(Exception):
    """Base class for all package errors."""


class ShapeError(RenormStatError, ValueError):
    """Operand dimensions do not match."""


class ValidationError(RenormStatError, ValueError):
    """Input violates a documented precondition."""


class ResourceError(RenormStatError):
    """Requested dimension exceeds the configured cap."""


class DegeneracyError(RenormStatError):
    """A spectrum assumed non-degenerate has a gap below threshold."""


class NumericError(RenormStatError, ArithmeticError):
    """Eigensolver failure or non-finite result."""


class EmptyWindowError(RenormStatError):
    """An energy window contains no levels."""

    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level


class UnfittableError(RenormStatError):
    """No inverse temperature reproduces the target energy."""


class ConvergenceError(RenormStatError):
    """Fixed-point iteration did not converge.

    ``residuals`` holds the residual of every iteration performed.
    """

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class UnsupportedFormError(RenormStatError):
    """Interaction is not of the factorized form sum_l J^S_l (x) J^A_l."""


class ConfigError(RenormStatError, ValueError):
    """Malformed experiment or model configuration."""
