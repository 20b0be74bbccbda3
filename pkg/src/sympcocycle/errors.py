"""Exception hierarchy shared by all modules."""


class SympCocycleError(Exception):
    pass


class DomainError(SympCocycleError, ValueError):
    """A point lies outside the chart domain of a model."""


class DomainEscapeError(DomainError):
    """A flow trajectory left the chart domain while integrating."""


class ConvergenceError(SympCocycleError, ArithmeticError):
    """An iterative numerical procedure did not reach its tolerance.

    ``estimate`` carries the best value obtained before giving up.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class QuadratureError(ConvergenceError):
    pass


class ConfigurationError(SympCocycleError, ValueError):
    pass


class FixedPointError(SympCocycleError, ValueError):
    """A map expected to fix a point moves it beyond tolerance."""
