"""Exception types raised across the package."""


class ConvBFError(Exception):
    """Base class for all errors raised by convbf."""


class InvalidInput(ConvBFError, ValueError):
    """Arguments violate a documented precondition."""


class NumericalFailure(ConvBFError, ArithmeticError):
    """A factorization or solve could not be completed."""


class DegenerateSteering(NumericalFailure):
    """The steering vector estimate carries no usable direction."""
