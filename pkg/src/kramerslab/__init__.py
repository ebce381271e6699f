"""Numerical lab for the small-temperature limit of Fokker-Planck dynamics in a double well.

Modules: potential, measure, asymptotics, fokker_planck, limit_flow,
diagnostics, experiments, cli.
"""
from .errors import (AssumptionError, ConfigurationError, DomainError, FitError, KramersError, NumericalError,
                     PositivityError, TangentSpaceError)

__version__ = "0.1.0"

__all__ = ["AssumptionError", "ConfigurationError", "DomainError", "FitError", "KramersError", "NumericalError",
           "PositivityError", "TangentSpaceError", "__version__"]
