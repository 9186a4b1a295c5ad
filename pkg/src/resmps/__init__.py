"""Residual matrix product state (ResMPS) classifiers.

sResMPS layers ``h -> h + x_n h W[n]``, activated aResMPS layers with ReLU
and dropout on the residual branch, and the equivalent two-channel MPS,
all trained with hand-written backpropagation.
"""

from .config import TrainConfig, load_config
from .data import Dataset, load_dir, load_idx, split
from .models import (AResMPS, MPS, Activation, FeatureMap, ModelKind, SResMPS,
                     feature_map, forward, init_params, mps_from_sresmps)
from .training import backward, cross_entropy, train

__all__ = [
    "AResMPS", "Activation", "Dataset", "FeatureMap", "MPS", "ModelKind", "SResMPS",
    "TrainConfig", "backward", "cross_entropy", "feature_map", "forward", "init_params",
    "load_config", "load_dir", "load_idx", "mps_from_sresmps", "split", "train",
]
