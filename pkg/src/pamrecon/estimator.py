"""Scikit-learn style wrapper around model construction, training and patchwork inference."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .augment import AugmentConfig
from .image import InvalidImageError, check_image
from .metrics import compute_metrics
from .nn import ModelConfig, build_model, load_checkpoint, save_checkpoint
from .patchwork import patchwork_reconstruct
from .sampling import DownsamplingRatio, make_sparse_input
from .training import TrainConfig, fit, seed_stream


def check_images(X, name="X"):
    """Coerce ``X`` to a list of 2-D float64 images in [0, 1].

    Accepts a single 2-D array, a 3-D stack ``(n, h, w)`` or a sequence of
    2-D arrays of possibly different sizes.
    """
    if isinstance(X, np.ndarray):
        if X.ndim == 2:
            X = [X]
        elif X.ndim == 3:
            X = list(X)
        else:
            raise InvalidImageError(f"{name} must be 2-D or 3-D, got shape {X.shape}")
    try:
        images = list(X)
    except TypeError:
        raise InvalidImageError(f"{name} must be an array or a sequence of arrays") from None
    if not images:
        raise InvalidImageError(f"{name} is empty")
    out = [check_image(im, f"{name}[{i}]") for i, im in enumerate(images)]
    for i, im in enumerate(out):
        if im.min() < 0.0 or im.max() > 1.0:
            raise InvalidImageError(f"{name}[{i}] has values outside [0, 1]")
    return out


def check_ratio(ratio):
    return DownsamplingRatio.parse(ratio)


class UndersampledReconstructor(BaseEstimator):
    """Learns to restore fully sampled images from raster-decimated ones.

    ``fit`` takes fully sampled images and trains on synthetic
    (zero-filled, full) pairs. ``predict`` maps zero-filled sparse images to
    reconstructions; ``transform`` first decimates fully sampled images at
    ``ratio``. ``score`` is the mean PSNR of ``transform(X)`` against ``X``.
    """

    def __init__(
        self,
        ratio="5x1",
        architecture="fd_unet",
        depth_levels=4,
        base_filters=32,
        bn_momentum=0.99,
        epochs=500,
        batch_size=16,
        learning_rate=0.001,
        beta1=0.9,
        beta2=0.999,
        adam_epsilon=1e-7,
        lambda1=1.0,
        lambda2=0.01,
        crop=128,
        crops_per_image=10,
        augment=True,
        val_crops=10,
        max_steps=0,
        tile=128,
        buffer=20,
        random_state=7,
    ):
        self.ratio = ratio
        self.architecture = architecture
        self.depth_levels = depth_levels
        self.base_filters = base_filters
        self.bn_momentum = bn_momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_epsilon = adam_epsilon
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.crop = crop
        self.crops_per_image = crops_per_image
        self.augment = augment
        self.val_crops = val_crops
        self.max_steps = max_steps
        self.tile = tile
        self.buffer = buffer
        self.random_state = random_state

    def _seed(self):
        rs = self.random_state
        if rs is None:
            return 0
        if isinstance(rs, np.random.Generator):
            return int(rs.integers(0, 2**31))
        return int(rs)

    def _configs(self, seed):
        model_cfg = ModelConfig(
            architecture=self.architecture,
            depth_levels=self.depth_levels,
            base_filters=self.base_filters,
            bn_momentum=self.bn_momentum,
        ).validate()
        train_cfg = TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            lr=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_epsilon=self.adam_epsilon,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            ratio=check_ratio(self.ratio),
            crops_per_image=self.crops_per_image,
            seed=seed,
            val_crops=self.val_crops,
            max_steps=self.max_steps,
        )
        aug = AugmentConfig(crop=self.crop, seed=seed, crops_per_image=self.crops_per_image)
        if not self.augment:
            aug = AugmentConfig(
                crop=self.crop, max_rotation=0.0, max_shift_frac=0.0, max_shear=0.0,
                noise_prob=0.0, seed=seed, crops_per_image=self.crops_per_image,
            )
        return model_cfg, train_cfg, aug

    def fit(self, X, y=None, X_val=None):
        """Train on fully sampled images ``X``; ``y`` is ignored."""
        images = check_images(X)
        val = check_images(X_val, "X_val") if X_val is not None else None
        seed = self._seed()
        model_cfg, train_cfg, aug = self._configs(seed)
        init_seed = int(seed_stream(seed, "init").integers(0, 2**31))
        model = build_model(model_cfg, seed=init_seed)
        result = fit(model, images, train_cfg, aug, val)
        model.load_state_dict(result.checkpoint.state)
        self.model_ = model
        self.ratio_ = train_cfg.ratio
        self.history_ = result.log
        self.n_steps_ = result.steps
        self.best_epoch_ = result.checkpoint.epoch
        self.best_metrics_ = result.checkpoint.metrics
        return self

    def predict(self, X):
        """Reconstruct zero-filled sparse images (same size as the full grid)."""
        check_is_fitted(self, "model_")
        out = [
            np.clip(patchwork_reconstruct(self.model_, im, self.tile, self.buffer), 0.0, 1.0)
            for im in check_images(X)
        ]
        return self._like_input(X, out)

    def transform(self, X):
        """Decimate fully sampled images at ``ratio`` and reconstruct them."""
        check_is_fitted(self, "model_")
        sparse = [make_sparse_input(im, self.ratio_) for im in check_images(X)]
        return self._like_input(X, self.predict(sparse))

    def score(self, X, y=None):
        """Mean PSNR (dB) of ``transform(X)`` against ``X``."""
        images = check_images(X)
        recon = self.transform(images)
        return float(np.mean([min(compute_metrics(t, r).psnr, 100.0) for t, r in zip(images, recon)]))

    @staticmethod
    def _like_input(X, out):
        if isinstance(X, np.ndarray) and X.ndim == 2:
            return out[0]
        if isinstance(X, np.ndarray) and X.ndim == 3:
            return np.stack(out)
        return out

    def save(self, path):
        check_is_fitted(self, "model_")
        meta = {"ratio": str(self.ratio_), "tile": self.tile, "buffer": self.buffer, "params": _jsonable(self.get_params())}
        save_checkpoint(path, self.model_, meta)

    @classmethod
    def from_checkpoint(cls, path):
        model, meta = load_checkpoint(path)
        params = {k: v for k, v in meta.get("params", {}).items() if k in cls._get_param_names()}
        cfg = model.cfg
        params.update(architecture=cfg.architecture, depth_levels=cfg.depth_levels, base_filters=cfg.base_filters)
        if "ratio" in meta:
            params["ratio"] = meta["ratio"]
        est = cls(**params)
        est.model_ = model
        est.ratio_ = check_ratio(est.ratio)
        return est


def _jsonable(params):
    out = {}
    for k, v in params.items():
        if isinstance(v, DownsamplingRatio):
            v = str(v)
        elif isinstance(v, (np.integer, np.floating)):
            v = v.item()
        elif not isinstance(v, (int, float, str, bool, type(None))):
            continue
        out[k] = v
    return out
