"""Exception hierarchy shared by all modules."""


class DDSDEError(Exception):
    """Base class for package errors."""


class DomainError(DDSDEError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(DDSDEError, ValueError):
    """Inputs violate a structural precondition (dimension, shape, ...)."""


class ResourceError(DDSDEError, RuntimeError):
    """The requested instance is too large for the chosen method."""


class FactorizationError(DDSDEError, RuntimeError):
    """A covariance factorization failed numerically."""


class ConfigurationError(DDSDEError, ValueError):
    """A solver or experiment configuration is invalid."""


class NumericalBlowUp(DDSDEError, FloatingPointError):
    """A time-stepping scheme produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ExtrapolationError(DDSDEError, ValueError):
    """A query point lies outside the interpolation hull."""
