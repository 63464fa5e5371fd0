"""Exception types shared across the calibration toolkit.

Every error carries the process exit code the CLI returns for it.
"""

from typing import Optional


class CalibrationError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class UsageError(CalibrationError):
    """Bad flags, missing files, unwritable output paths."""

    exit_code = 1


class DataValidationError(CalibrationError, ValueError):
    """A dataset, histogram or record violates its invariants."""

    exit_code = 2


class UndefinedMetricError(CalibrationError, ValueError):
    """A metric is undefined on the given data (e.g. single-class AUC)."""

    exit_code = 2


class NumericalError(CalibrationError, ArithmeticError):
    """Training or fitting produced a non-finite value."""

    exit_code = 3

    def __init__(self, message: str, index: Optional[int] = None):
        if index is not None:
            message = f"{message} (example index {index})"
        super().__init__(message)
        self.index = index
