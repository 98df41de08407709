"""Exception types raised across the package."""


class GaussFIError(Exception):
    """Base class for all package errors."""


class DimensionError(GaussFIError, ValueError):
    """Array shapes or mode counts are incompatible."""


class NotAStateError(GaussFIError, ValueError):
    """A covariance matrix violates the uncertainty relation."""


class StructureError(GaussFIError, ValueError):
    """A matrix lacks the algebraic structure an algorithm relies on."""


class PreconditionError(GaussFIError, ValueError):
    """An input violates a documented precondition."""


class DomainError(GaussFIError, ValueError):
    """A channel or model parameter is outside its physical domain."""


class NumericalError(GaussFIError, ArithmeticError):
    """A numerical quantity cannot be evaluated reliably."""


class NumericalRankError(NumericalError):
    """A matrix that must be inverted is numerically singular."""


class ModelSingularityError(NumericalError):
    """The quantum Fisher information diverges or its formula does not apply."""


class ConfigError(GaussFIError, ValueError):
    """A model configuration file or override is invalid."""
