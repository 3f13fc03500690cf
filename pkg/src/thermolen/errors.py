"""Exception hierarchy.

Every error carries the CLI exit status it maps to, so the command line
front end can translate failures without inspecting messages.
"""


class ThermolenError(Exception):
    exit_code = 1


class ConfigError(ThermolenError):
    exit_code = 2


class ValidationError(ThermolenError, ValueError):
    """Malformed input: non-Hermitian operator, dimension mismatch, bad state."""

    exit_code = 3


class DomainError(ThermolenError, ValueError):
    """Input outside the admissible domain of an operation."""

    exit_code = 3

    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class SingularityError(DomainError):
    """Rank-deficient state, vanishing population or non-unique fixed point."""


class ConditioningError(DomainError):
    pass


class ModelConsistencyError(ThermolenError):
    """A generator does not annihilate its declared Gibbs state."""

    exit_code = 3


class ConvergenceError(ThermolenError):
    exit_code = 4

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class AccuracyError(ConvergenceError):
    pass


class IntegratorError(ConvergenceError):
    pass
