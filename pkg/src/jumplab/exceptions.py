"""Exception hierarchy shared by every jumplab module."""


class JumpLabError(Exception):
    """Base class for all errors raised by jumplab."""


class DomainError(JumpLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(JumpLabError, ValueError):
    """A configuration or precondition is violated before any computation."""


class QuadratureError(JumpLabError, ArithmeticError):
    """A quadrature failed to converge within its refinement budget.

    The best available estimate is kept in ``partial_value``.
    """

    def __init__(self, message, partial_value=None):
        super().__init__(message)
        self.partial_value = partial_value


class DivergentEntryError(QuadratureError):
    """A conductance entry is infinite under the strict cell-average policy."""

    def __init__(self, message, pair, partial_value=None):
        super().__init__(message, partial_value)
        self.pair = pair


class DominatingRateError(ConfigurationError):
    """The thinning rate does not dominate the large-jump intensity."""


class CapabilityError(JumpLabError):
    """The request exceeds what the chosen method supports."""


class InsufficientDataError(JumpLabError, ValueError):
    """Too few usable samples to produce an estimate."""


class NumericError(JumpLabError, ArithmeticError):
    """A linear solver or decomposition failed; ``residual`` records how badly."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
