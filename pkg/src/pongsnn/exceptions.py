"""Exception types raised across the package."""


class ParameterError(ValueError):
    """An argument violates an operation's precondition."""


class ConfigurationError(ValueError):
    """A configuration value is invalid or inconsistent."""


class UndefinedCorrelationError(ValueError):
    """A rank correlation was requested on zero-variance data."""
