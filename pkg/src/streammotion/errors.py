"""Exception hierarchy.

``ValidationError`` and its subclasses map to CLI exit code 2, everything
else derived from ``StreamMotionError`` maps to exit code 1.
"""


class StreamMotionError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(StreamMotionError, ValueError):
    """Input violates a documented invariant."""


class FormatError(ValidationError):
    """A file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(ValidationError):
    """Parsed data has an inconsistent shape (e.g. varying joint count)."""


class SequencingError(StreamMotionError):
    """Frames arrived out of order or streams fell out of step."""


class ScaleEstimationError(StreamMotionError):
    """No usable pixels were left to estimate the metric scale."""


class DegenerateConfigurationError(StreamMotionError):
    """Point configuration does not determine an alignment."""


class MetricUndefinedError(StreamMotionError):
    """A metric is mathematically undefined for the given input."""
