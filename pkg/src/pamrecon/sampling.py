"""Raster-scan undersampling, zero-fill and the bicubic baseline.

Convention: ``sx`` strides columns (image x axis), ``sy`` strides rows
(image y axis). The first row and column are always kept.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .image import check_image

_RATIO_RE = re.compile(r"^\s*(\d+)\s*[xX]\s*(\d+)\s*$")


@dataclass(frozen=True)
class DownsamplingRatio:
    sx: int = 1
    sy: int = 1

    def __post_init__(self):
        for name in ("sx", "sy"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {v!r}")
            object.__setattr__(self, name, int(v))

    @classmethod
    def parse(cls, text):
        """Parse ``"SxxSy"`` notation such as ``"7x3"``."""
        if isinstance(text, DownsamplingRatio):
            return text
        if isinstance(text, (tuple, list)) and len(text) == 2:
            return cls(*text)
        m = _RATIO_RE.match(str(text))
        if not m:
            raise ValueError(f"bad ratio {text!r}; expected e.g. '7x3'")
        return cls(int(m.group(1)), int(m.group(2)))

    def __str__(self):
        return f"{self.sx}x{self.sy}"

    def retained_shape(self, h, w):
        return -(-h // self.sy), -(-w // self.sx)

    def effective_fraction(self, h, w):
        rh, rw = self.retained_shape(h, w)
        return (rh * rw) / (h * w)

    @property
    def asymptotic_fraction(self):
        return 1.0 / (self.sx * self.sy)


@dataclass(frozen=True)
class SampledImage:
    full_shape: tuple
    ratio: DownsamplingRatio
    retained: np.ndarray


def downsample(img, ratio):
    """Keep rows ``i*sy`` and columns ``j*sx``; nothing is averaged."""
    img = check_image(img)
    ratio = DownsamplingRatio.parse(ratio)
    retained = img[:: ratio.sy, :: ratio.sx].copy()
    return SampledImage(tuple(img.shape), ratio, retained)


def zero_fill(s):
    """Place retained samples back on the full grid with zeros elsewhere."""
    out = np.zeros(s.full_shape, dtype=np.float64)
    out[:: s.ratio.sy, :: s.ratio.sx] = s.retained
    return out


def sample_mask(ratio, h, w):
    """Binary mask of retained positions."""
    ratio = DownsamplingRatio.parse(ratio)
    if h < 1 or w < 1:
        raise ValueError(f"mask dims must be >= 1, got {h}x{w}")
    mask = np.zeros((h, w), dtype=np.float64)
    mask[:: ratio.sy, :: ratio.sx] = 1.0
    return mask


def cubic_kernel(t, a=-0.5):
    """Keys cubic convolution kernel; ``a = -0.5`` is Catmull-Rom."""
    t = np.abs(t)
    t2 = t * t
    t3 = t2 * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _interp_matrix(n_src, n_out, stride, a=-0.5):
    # output pixel x sits at source coordinate x / stride, since retained
    # sample i came from full-grid index i * stride
    if n_src < 2:
        return np.ones((n_out, max(n_src, 1)))
    pos = np.arange(n_out, dtype=np.float64) / stride
    base = np.floor(pos).astype(int)
    frac = pos - base
    mat = np.zeros((n_out, n_src))
    rows = np.arange(n_out)
    for off in (-1, 0, 1, 2):
        idx = np.clip(base + off, 0, n_src - 1)
        np.add.at(mat, (rows, idx), cubic_kernel(frac - off, a))
    return mat


def bicubic_upsample(s, a=-0.5):
    """Separable Catmull-Rom upsampling of the retained grid to full size.

    Border samples are replicated for taps past the edge; output is clipped
    to ``[0, 1]``. An axis with a single retained sample is replicated.
    """
    h, w = s.full_shape
    rows = _interp_matrix(s.retained.shape[0], h, s.ratio.sy, a)
    cols = _interp_matrix(s.retained.shape[1], w, s.ratio.sx, a)
    out = rows @ s.retained @ cols.T
    return np.clip(out, 0.0, 1.0)


def make_sparse_input(img, ratio):
    """Zero-filled network input for a fully-sampled image."""
    return zero_fill(downsample(img, ratio))
