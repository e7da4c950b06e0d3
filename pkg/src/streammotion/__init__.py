"""Streaming motion-processing toolkit.

Causal KV-cache attention, online EMA pose smoothing, world placement with
metric-scale recovery, soft human masks, motion metrics, spectrogram jitter
analysis and delay accounting, all runnable on synthetic streams.
"""

from streammotion.errors import (
    DegenerateConfigurationError,
    FormatError,
    MetricUndefinedError,
    ScaleEstimationError,
    SchemaError,
    SequencingError,
    StreamMotionError,
    ValidationError,
)
from streammotion.motion_model import (
    MotionSequence,
    PoseSample,
    Quaternion,
    ScalarGrid,
    Trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateConfigurationError",
    "FormatError",
    "MetricUndefinedError",
    "MotionSequence",
    "PoseSample",
    "Quaternion",
    "ScalarGrid",
    "ScaleEstimationError",
    "SchemaError",
    "SequencingError",
    "StreamMotionError",
    "Trajectory",
    "ValidationError",
]
