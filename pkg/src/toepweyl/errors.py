"""Exception hierarchy shared by every module."""


class ToepWeylError(Exception):
    """Base class for library errors."""


class DimensionError(ToepWeylError, ValueError):
    pass


class ValidationError(ToepWeylError, ValueError):
    """Input fails a structural check; ``residual`` carries the measured defect."""

    def __init__(self, message, residual=None, invariant=None):
        super().__init__(message)
        self.residual = residual
        self.invariant = invariant


class SingularityError(ToepWeylError, ArithmeticError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class AccuracyError(ToepWeylError, ArithmeticError):
    pass


class AccuracyWarning(UserWarning):
    pass


class TruncationError(ToepWeylError, RuntimeError):
    """A trajectory left the coordinate chart."""

    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class IntegrationError(ToepWeylError, RuntimeError):
    pass


class UnsupportedError(ToepWeylError, NotImplementedError):
    pass


class InputError(ToepWeylError, ValueError):
    pass


class ConfigError(ToepWeylError, ValueError):
    pass
