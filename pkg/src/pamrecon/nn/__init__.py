from .checkpoint import CheckpointFormatError, load_checkpoint, read_checkpoint, save_checkpoint
from .layers import ELU, BatchNorm, ConfigError, Conv2D, Module, Sequential, ShapeError, Upsample2x
from .model import (
    ConvBlock,
    DenseBlock,
    DownBlock,
    ModelConfig,
    PlainBlock,
    ReconstructionNet,
    UpBlock,
    build_model,
)

__all__ = [
    "BatchNorm",
    "CheckpointFormatError",
    "ConfigError",
    "Conv2D",
    "ConvBlock",
    "DenseBlock",
    "DownBlock",
    "ELU",
    "ModelConfig",
    "Module",
    "PlainBlock",
    "ReconstructionNet",
    "Sequential",
    "ShapeError",
    "UpBlock",
    "Upsample2x",
    "build_model",
    "load_checkpoint",
    "read_checkpoint",
    "save_checkpoint",
]
