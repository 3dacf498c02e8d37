"""Flat ``key = value`` run configuration shared by the CLI commands.

Text after ``#`` on any line is a comment.
Every key maps onto one field of the model, training, augmentation or
phantom configs, or onto a path; unknown keys are rejected with the line
number so a typo never silently falls back to a default.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .augment import AugmentConfig
from .nn import ConfigError, ModelConfig
from .phantom import PhantomConfig
from .sampling import DownsamplingRatio
from .training import TrainConfig


def _floats(text):
    return tuple(float(v) for v in text.split(","))


def _bool(text):
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


@dataclass(frozen=True)
class RunConfig:
    # model
    architecture: str = "fd_unet"
    depth_levels: int = 4
    base_filters: int = 32
    bn_momentum: float = 0.99
    bn_epsilon: float = 0.001
    # training
    batch_size: int = 16
    epochs: int = 500
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-7
    lambda1: float = 1.0
    lambda2: float = 0.01
    ratio: DownsamplingRatio = DownsamplingRatio(5, 1)
    split: tuple = (0.8, 0.1, 0.1)
    val_crops: int = 10
    max_steps: int = 0
    # augmentation
    crop: int = 128
    crops_per_image: int = 10
    max_rotation: float = 20.0
    max_shift_frac: float = 0.2
    max_shear: float = 0.2
    noise_prob: float = 0.1
    noise_sigma: float = 0.1
    augment: bool = True
    # patchwork
    tile: int = 128
    buffer: int = 20
    # phantoms, used when dataset = phantoms
    phantom_count: int = 8
    phantom_size: int = 256
    # paths
    dataset: str = ""
    checkpoint: str = "checkpoint.pamckpt"
    log: str = "train_log.csv"
    out: str = "."
    resume: str = ""
    seed: int = 7

    def model_config(self):
        return ModelConfig(
            architecture=self.architecture,
            depth_levels=self.depth_levels,
            base_filters=self.base_filters,
            bn_momentum=self.bn_momentum,
            bn_epsilon=self.bn_epsilon,
        ).validate()

    def train_config(self):
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_epsilon=self.adam_epsilon,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            ratio=self.ratio,
            crops_per_image=self.crops_per_image,
            split=self.split,
            seed=self.seed,
            val_crops=self.val_crops,
            max_steps=self.max_steps,
        )

    def augment_config(self):
        if not self.augment:
            return AugmentConfig(
                crop=self.crop, max_rotation=0.0, max_shift_frac=0.0, max_shear=0.0,
                noise_prob=0.0, seed=self.seed, crops_per_image=self.crops_per_image,
            )
        return AugmentConfig(
            crop=self.crop,
            max_rotation=self.max_rotation,
            max_shift_frac=self.max_shift_frac,
            max_shear=self.max_shear,
            noise_prob=self.noise_prob,
            noise_sigma=self.noise_sigma,
            seed=self.seed,
            crops_per_image=self.crops_per_image,
        )

    def phantom_config(self):
        return PhantomConfig(shape=(self.phantom_size, self.phantom_size), seed=self.seed)

    def validate(self):
        self.model_config()
        checks = [
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.lr > 0, "lr must be > 0"),
            (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1, "beta1 and beta2 must lie in [0, 1)"),
            (self.lambda1 >= 0 and self.lambda2 >= 0, "lambda1 and lambda2 must be >= 0"),
            (len(self.split) == 3 and abs(sum(self.split) - 1) < 1e-9, "split must be three fractions summing to 1"),
            (self.crop >= 1 and self.crop % self.model_config().multiple == 0,
             f"crop must be a positive multiple of {self.model_config().multiple}"),
            (self.tile >= 1 and self.tile % self.model_config().multiple == 0,
             f"tile must be a positive multiple of {self.model_config().multiple}"),
            (0 < 2 * self.buffer < self.tile, "buffer must satisfy 0 < 2*buffer < tile"),
            (self.phantom_count >= 1 and self.phantom_size >= 128, "phantoms need count >= 1 and size >= 128"),
            (self.val_crops >= 1 and self.crops_per_image >= 1, "val_crops and crops_per_image must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


_PARSERS = {
    int: int,
    float: float,
    str: str,
    bool: _bool,
    tuple: _floats,
    DownsamplingRatio: DownsamplingRatio.parse,
}
_TYPES = {f.name: f.type for f in fields(RunConfig)}
_BUILTIN = {"int": int, "float": float, "str": str, "bool": bool, "tuple": tuple, "DownsamplingRatio": DownsamplingRatio}


def parse_config_text(text, source="<config>", base=None):
    """Parse config text; raises ``ConfigError`` with ``source:line`` diagnostics."""
    values = {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        kind = _BUILTIN[_TYPES[key]] if isinstance(_TYPES[key], str) else _TYPES[key]
        try:
            values[key] = _PARSERS[kind](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    cfg = replace(base or RunConfig(), **values)
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path), base=base)


def format_config(cfg):
    """Inverse of ``parse_config_text`` for every field."""
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(repr(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
