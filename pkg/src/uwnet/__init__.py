"""Shallow convolutional underwater image enhancement, numpy end to end.

The package splits into tensor kernels (ops), the network and its optimizer
state (model), loss terms (losses), quality metrics (metrics), image and
dataset handling (data), the weight file format (weights), the epoch loop
(training), benchmarking (bench), and report serialization (reports). The
`uwnet` console script in cli wires them together.
"""

from . import bench, cli, data, losses, metrics, model, ops, reports, training, weights
from .losses import FeatureExtractor, LossReport
from .model import NetworkConfig, ParameterStore, build_network, forward
from .training import enhance, run_training

__all__ = [
    "bench",
    "cli",
    "data",
    "losses",
    "metrics",
    "model",
    "ops",
    "reports",
    "training",
    "weights",
    "FeatureExtractor",
    "LossReport",
    "NetworkConfig",
    "ParameterStore",
    "build_network",
    "forward",
    "enhance",
    "run_training",
]

__version__ = "0.1.0"
