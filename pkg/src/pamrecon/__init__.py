"""Reconstruction of undersampled raster-scanned images with a fully dense U-net."""

__version__ = "0.1.0"

from .estimator import UndersampledReconstructor, check_images
from .metrics import MetricsReport, compute_metrics
from .nn import ModelConfig, build_model, load_checkpoint, save_checkpoint
from .patchwork import patchwork_reconstruct
from .sampling import DownsamplingRatio, bicubic_upsample, downsample, make_sparse_input, zero_fill
from .training import TrainConfig, fit, saving_metric

__all__ = [
    "DownsamplingRatio",
    "MetricsReport",
    "ModelConfig",
    "TrainConfig",
    "UndersampledReconstructor",
    "bicubic_upsample",
    "build_model",
    "check_images",
    "compute_metrics",
    "downsample",
    "fit",
    "load_checkpoint",
    "make_sparse_input",
    "patchwork_reconstruct",
    "save_checkpoint",
    "saving_metric",
    "zero_fill",
]
