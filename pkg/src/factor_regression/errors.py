"""Exceptions raised by the factor_regression package."""

from typing import Optional, Tuple


class FactorRegressionError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(FactorRegressionError, ValueError):
    """Matrices or vectors whose shapes do not fit together."""


class ContractViolation(FactorRegressionError, ValueError):
    """A precondition of an operation was not met by the caller."""


class NumericalError(FactorRegressionError, ArithmeticError):
    """
    A non-finite intermediate value or a failed factorization. The offending
    index, when there is one, is kept on the exception.
    """

    def __init__(self, message: str, index: Optional[Tuple[int, ...]] = None):
        super().__init__(message if index is None else f"{message} at {index}")
        self.index = index


class ConfigError(FactorRegressionError, ValueError):
    """An invalid configuration value. The offending key is kept."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class CheckpointError(FactorRegressionError, RuntimeError):
    """A checkpoint that is missing, unreadable or from another version."""
