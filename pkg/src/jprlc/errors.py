"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value or malformed experiment setup."""


class DegenerateDataError(RuntimeError):
    """The data cannot support the requested estimate (e.g. no inlier mass)."""


class NumericalError(ArithmeticError):
    """A numeric computation produced an undefined or non-finite result."""


class SolverError(RuntimeError):
    """An update block failed; the message carries iteration and block name."""
