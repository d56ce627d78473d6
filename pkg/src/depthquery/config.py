"""Pipeline configuration and its JSON representation.

Config files mirror :class:`PipelineConfig` one-to-one: nested sections map to
nested dataclasses, and unknown keys are rejected by their dotted path.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, get_type_hints

from .errors import ConfigError
from .geometry import RoiBounds
from .matching import LossConfig
from .metrics import DEFAULT_THRESHOLDS
from .querygen import QueryGenConfig
from .simworld import NoiseConfig, RigConfig, SceneConfig


@dataclass(frozen=True)
class PipelineConfig:
    dim: int = 64
    n_classes: int = 3
    decoder_layers: int = 6
    memory_frames: int = 4
    memory_k: int = 64
    use_temporal: bool = True
    query_mode: str = "depth_guided"  # or "fixed"
    n_fixed_queries: int = 900
    oracle_head: bool = False
    velocity_noise: float = 0.0
    weight_seed: int = 0
    stub_seed: int = 0
    query_seed: int = 0
    thresholds: tuple = DEFAULT_THRESHOLDS
    roi: RoiBounds = field(default_factory=RoiBounds)
    querygen: QueryGenConfig = field(default_factory=QueryGenConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)

    def __post_init__(self):
        if self.dim <= 0 or self.dim % 4:
            raise ConfigError("dim: must be a positive multiple of 4")
        if self.query_mode not in ("depth_guided", "fixed"):
            raise ConfigError("query_mode: must be 'depth_guided' or 'fixed'")
        if self.memory_frames < 1 or self.memory_k < 0:
            raise ConfigError("memory_frames/memory_k: out of range")
        if self.decoder_layers < 0:
            raise ConfigError("decoder_layers: must be >= 0")
        if self.n_classes < 1:
            raise ConfigError("n_classes: must be >= 1")


_SCALARS = {
    bool: lambda v: isinstance(v, bool),
    int: lambda v: isinstance(v, int) and not isinstance(v, bool),
    float: lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    str: lambda v: isinstance(v, str),
}


def _build(cls, data: Any, path: str):
    if not dataclasses.is_dataclass(cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in names:
            raise ConfigError(f"{where}: unknown key")
        hint = hints[key]
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build(hint, value, where)
        elif hint in _SCALARS and not _SCALARS[hint](value):
            raise ConfigError(f"{where}: expected {hint.__name__}, got {type(value).__name__}")
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path + '.' if path else ''}{exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from None


def config_from_dict(data: dict) -> PipelineConfig:
    return _build(PipelineConfig, data, "")


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_plain(x) for x in obj]
    return obj


def config_to_dict(cfg: PipelineConfig) -> dict:
    return _plain(cfg)


def load_config(path: str | Path) -> PipelineConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data)
