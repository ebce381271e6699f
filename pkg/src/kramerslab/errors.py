"""Exception hierarchy shared by all modules."""


class KramersError(Exception):
    """Base class for errors raised by kramerslab."""


class DomainError(KramersError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(KramersError, ValueError):
    """Inconsistent run parameters (grid, intervals, time controls)."""


class AssumptionError(KramersError, ValueError):
    """The potential violates a structural assumption the operation needs."""


class PositivityError(KramersError, ValueError):
    """A relative density that must stay positive is not."""


class TangentSpaceError(KramersError, ValueError):
    """A velocity does not integrate to zero, so it is not a mass-preserving direction."""


class NumericalError(KramersError, ArithmeticError):
    """Quadrature or time stepping failed to reach the requested accuracy."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class FitError(KramersError, ValueError):
    """A rate fit is impossible: too few points, nonpositive errors or a degenerate design."""
