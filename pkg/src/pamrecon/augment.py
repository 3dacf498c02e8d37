"""Training-time augmentation: random crop, affine jitter and additive noise.

Every function takes an explicit ``numpy.random.Generator`` so a stream
seeded once reproduces the whole sequence of samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import affine_transform

from .image import InvalidImageError, check_image


@dataclass(frozen=True)
class AugmentConfig:
    crop: int = 128
    max_rotation: float = 20.0
    max_shift_frac: float = 0.20
    max_shear: float = 0.2
    noise_prob: float = 0.10
    noise_sigma: float = 0.1
    fill: float = 0.0
    seed: int = 7
    crops_per_image: int = 10


def make_rng(cfg):
    return np.random.default_rng(cfg.seed)


def random_crop(img, cfg, rng):
    img = check_image(img)
    c = cfg.crop
    h, w = img.shape
    if h < c or w < c:
        raise InvalidImageError(f"image {h}x{w} smaller than crop {c}")
    r = int(rng.integers(0, h - c + 1))
    q = int(rng.integers(0, w - c + 1))
    return img[r : r + c, q : q + c].copy()


def center_crop(img, size=128):
    img = check_image(img)
    h, w = img.shape
    if h < size or w < size:
        raise InvalidImageError(f"image {h}x{w} smaller than crop {size}")
    r = (h - size) // 2
    q = (w - size) // 2
    return img[r : r + size, q : q + size].copy()


def affine_matrix(shape, angle_deg=0.0, shift=(0.0, 0.0), shear=0.0):
    """Forward map (row, col) -> (row, col) about the image center.

    Rotation by ``angle_deg``, x-shear by ``shear`` and a translation of
    ``shift`` = (rows, cols) pixels. Returns a 3x3 homogeneous matrix.
    """
    th = np.deg2rad(angle_deg)
    c, s = np.cos(th), np.sin(th)
    rot = np.array([[c, -s], [s, c]])
    sh = np.array([[1.0, 0.0], [shear, 1.0]])
    lin = rot @ sh
    center = (np.array(shape, dtype=np.float64) - 1) / 2.0
    mat = np.eye(3)
    mat[:2, :2] = lin
    mat[:2, 2] = center - lin @ center + np.asarray(shift, dtype=np.float64)
    return mat


def apply_affine(img, mat, fill=0.0):
    """Bilinear resampling of ``img`` under forward map ``mat``."""
    inv = np.linalg.inv(mat)
    return affine_transform(
        img, inv[:2, :2], offset=inv[:2, 2], order=1, mode="constant", cval=fill
    )


def draw_affine(shape, cfg, rng):
    angle = rng.uniform(-cfg.max_rotation, cfg.max_rotation)
    dy = rng.uniform(-cfg.max_shift_frac, cfg.max_shift_frac) * shape[0]
    dx = rng.uniform(-cfg.max_shift_frac, cfg.max_shift_frac) * shape[1]
    shear = rng.uniform(-cfg.max_shear, cfg.max_shear)
    return affine_matrix(shape, angle, (dy, dx), shear)


def affine_augment(img, cfg, rng):
    img = check_image(img)
    return apply_affine(img, draw_affine(img.shape, cfg, rng), cfg.fill)


def renormalize(img):
    lo, hi = img.min(), img.max()
    if hi <= lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def noise_augment(img, cfg, rng):
    """Add N(0, sigma^2) per pixel then rescale min->0, max->1."""
    img = check_image(img)
    noisy = img + rng.normal(0.0, cfg.noise_sigma, size=img.shape)
    return renormalize(noisy)


def augment_sample(img, cfg, rng):
    """One training sample: crop -> affine -> noise with ``noise_prob``."""
    out = random_crop(img, cfg, rng)
    out = affine_augment(out, cfg, rng)
    if rng.random() < cfg.noise_prob:
        out = noise_augment(out, cfg, rng)
    return out


def validation_crops(img, size, n, seed):
    """Center crop plus ``n - 1`` seeded random crops, no other augmentation."""
    crops = [center_crop(img, size)]
    rng = np.random.default_rng(seed)
    cfg = AugmentConfig(crop=size)
    crops.extend(random_crop(img, cfg, rng) for _ in range(n - 1))
    return crops
