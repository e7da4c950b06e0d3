"""Layered configuration: built-in defaults < INI file < command-line flags.

Example file::

    [smoother]
    alpha = 0.5
    buffer_size = 8

    [stft]
    n_fft = 128
    hop = 32

Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field, fields

from streammotion.attention import FUSION_MODES
from streammotion.errors import FormatError, ValidationError
from streammotion.metrics import LossWeights
from streammotion.smoothing import SmootherConfig
from streammotion.soft_mask import MaskParams
from streammotion.spectral import StftParams

ENV_VAR = "STREAMMOTION_CONFIG"


@dataclass(frozen=True)
class AttentionConfig:
    window_size: int = 3
    fusion: str = "add"
    seed: int = 0

    def __post_init__(self):
        if int(self.window_size) != self.window_size or self.window_size < 1:
            raise ValidationError(f"window_size must be an integer >= 1, got {self.window_size}")
        if self.fusion not in FUSION_MODES:
            raise ValidationError(f"fusion must be one of {FUSION_MODES}")


@dataclass(frozen=True)
class MetricsConfig:
    fps: float = 30.0
    segment_len: int = 100
    root_joint: int = 0

    def __post_init__(self):
        if not self.fps > 0:
            raise ValidationError("fps must be positive")
        if int(self.segment_len) != self.segment_len or self.segment_len < 2:
            raise ValidationError("segment_len must be an integer >= 2")


@dataclass(frozen=True)
class ScaleConfig:
    frames: int = 10
    dilation: int = 1

    def __post_init__(self):
        if self.frames < 1 or self.dilation < 0:
            raise ValidationError("scale.frames must be >= 1 and scale.dilation >= 0")


@dataclass(frozen=True)
class PathsConfig:
    input: str = ""
    output: str = ""


SECTIONS = {
    "smoother": SmootherConfig,
    "attention": AttentionConfig,
    "stft": StftParams,
    "mask": MaskParams,
    "metrics": MetricsConfig,
    "losses": LossWeights,
    "scale": ScaleConfig,
    "paths": PathsConfig,
}


@dataclass(frozen=True)
class GlobalConfig:
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    stft: StftParams = field(default_factory=StftParams)
    mask: MaskParams = field(default_factory=MaskParams)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    losses: LossWeights = field(default_factory=LossWeights)
    scale: ScaleConfig = field(default_factory=ScaleConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def as_dict(self):
        return {name: asdict(getattr(self, name)) for name in SECTIONS}


def _coerce(section, key, raw, default):
    try:
        if isinstance(default, bool):
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw)
    except ValueError as exc:
        raise ValidationError(f"{section}.{key}: {exc}") from None


def read_config_file(path):
    """Parse an INI file into ``{section: {key: raw string}}``."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise FormatError(f"{path}: {exc}") from None
    out = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ValidationError(f"{path}: unknown section [{section}]")
        known = {f.name for f in fields(SECTIONS[section])}
        for key, value in parser.items(section):
            if key not in known:
                raise ValidationError(f"{path}: unknown key {section}.{key}")
            out.setdefault(section, {})[key] = value
    return out


def build_config(file_values=None, overrides=None):
    """Merge layers and validate every section.

    ``overrides`` maps ``"section.key"`` to typed values; ``None`` entries are
    treated as absent so unset CLI flags never mask the file.
    """
    merged = {name: asdict(cls()) for name, cls in SECTIONS.items()}
    defaults = {name: dict(vals) for name, vals in merged.items()}
    for section, values in (file_values or {}).items():
        for key, raw in values.items():
            merged[section][key] = _coerce(section, key, raw, defaults[section][key])
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, key = dotted.split(".", 1)
        if section not in merged or key not in merged[section]:
            raise ValidationError(f"unknown config key {dotted}")
        merged[section][key] = _coerce(section, key, value, defaults[section][key])
    return GlobalConfig(**{name: SECTIONS[name](**vals) for name, vals in merged.items()})


def load_config(path=None, overrides=None):
    """Defaults, then ``path`` (or ``$STREAMMOTION_CONFIG``), then ``overrides``."""
    path = path or os.environ.get(ENV_VAR) or None
    file_values = read_config_file(path) if path else {}
    return build_config(file_values, overrides)
