"""Depth-guided query generation for multi-camera 3D detection, on a synthetic world."""

from .config import PipelineConfig, config_from_dict, load_config
from .errors import DepthQueryError
from .pipeline import run_ablation, run_frame, run_sequence
from .simworld import SceneConfig, generate_scene

__version__ = "0.1.0"

__all__ = [
    "DepthQueryError",
    "PipelineConfig",
    "SceneConfig",
    "config_from_dict",
    "generate_scene",
    "load_config",
    "run_ablation",
    "run_frame",
    "run_sequence",
]
