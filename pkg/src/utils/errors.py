"""
Error hierarchy shared by every package module.

Each class also derives from the closest builtin so callers that only know
about ``ValueError``/``OSError`` keep working.
"""
from __future__ import annotations


class HatError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(HatError, ValueError):
    """Tensor shapes do not line up."""


class ArgumentError(HatError, ValueError):
    """An argument is outside its documented domain."""


class StateError(HatError, RuntimeError):
    """An object is used before the state it needs exists."""


class NumericError(HatError, ArithmeticError):
    """A non-finite value appeared where only finite values are allowed."""


class TrainingAborted(NumericError):
    """Training stopped on a non-finite loss; carries where it happened."""

    def __init__(self, message: str, task: int, epoch: int, batch: int):
        super().__init__(message)
        self.task = task
        self.epoch = epoch
        self.batch = batch


class FormatError(HatError, ValueError):
    """A binary file does not follow its format (bad magic, bad header)."""


class TruncatedFileError(HatError, OSError):
    """A binary file ends before its header says it should."""


class ConsistencyError(HatError, ValueError):
    """Two inputs that must agree do not."""


class IntegrityError(HatError, OSError):
    """A downloaded file failed checksum verification."""


class UndefinedRatioError(HatError, ZeroDivisionError):
    """The forgetting ratio is undefined because A_J == A_R."""


class ConfigError(HatError, ValueError):
    """An experiment config failed validation."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line
