"""SyncMapV2: unsupervised image segmentation with reservoir features and
self-organising attractor-repeller map dynamics."""
from .config import PipelineConfig, desk_profile, load_config
from .dynamics import DynamicsConfig, MapState, init_map
from .evaluation import ScoreTable, unsupervised_miou
from .pipeline import run_adaptability, run_robustness, run_standard, segment_image
from .reservoir import EsnParams, init_esn

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig", "desk_profile", "load_config", "DynamicsConfig", "MapState",
    "init_map", "ScoreTable", "unsupervised_miou", "run_standard", "run_robustness",
    "run_adaptability", "segment_image", "EsnParams", "init_esn",
]
