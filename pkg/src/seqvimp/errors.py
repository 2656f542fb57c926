"""Exception hierarchy shared by every module."""


class SeqVimpError(Exception):
    """Base class for all package errors."""


class ConfigError(SeqVimpError, ValueError):
    """Invalid test, forest or run configuration."""


class DataError(SeqVimpError, ValueError):
    """Unreadable or unusable input data."""


class FitError(DataError):
    """A forest could not be fitted (e.g. degenerate target)."""


class NumericalError(SeqVimpError, ArithmeticError):
    """Root search or quadrature failed to converge."""


class UsageError(SeqVimpError, RuntimeError):
    """An object was used outside its contract (e.g. stepping a finished monitor)."""
