"""Semi-supervised video classification with adaptive pseudo-label thresholds,
cross-set clip interpolation and adversarial feature alignment."""

__version__ = "0.1.0"

from .config import RunConfig
from .data import BatchPair, DatasetIndex, SynthSpec, VideoClip, synth_generate
from .losses import LossBundle, LossWeights
from .mixing import MixedBatch
from .models import ModelBundle, build_backbone
from .thresholds import MaskResult, SatState, sat_init, sat_update
from .trainer import Trainer, cosine_lr

__all__ = [
    "BatchPair", "DatasetIndex", "LossBundle", "LossWeights", "MaskResult",
    "MixedBatch", "ModelBundle", "RunConfig", "SatState", "SynthSpec",
    "Trainer", "VideoClip", "build_backbone", "cosine_lr", "sat_init",
    "sat_update", "synth_generate",
]
