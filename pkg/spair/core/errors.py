"""Exception hierarchy shared by every module."""
from typing import Optional


class SpairError(Exception):
    """Base class for all library errors."""


class ShapeError(SpairError, ValueError):
    """Shape or dtype contract violated."""


class EmptyRegionError(SpairError, ValueError):
    """A reduction was requested over an empty mask region."""


class StructuralError(SpairError):
    """Graph-level inconsistency: tape cycles, accumulation mismatches, missing fusion points."""


class ConfigError(SpairError):
    """Invalid configuration, unknown keys, or missing prerequisite artifacts."""


class NonFiniteError(SpairError, ArithmeticError):
    """A non-finite value reached a place that requires finite numbers."""


class FormatError(SpairError, ValueError):
    """Malformed serialized payload (image, checkpoint, manifest)."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
