"""Single-channel image helpers: validation, preprocessing, padding and I/O.

Images are plain 2-D ``numpy`` arrays of float intensities, nominally in
``[0, 1]``. Everything here is a pure function of its inputs.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

RAW_MAGIC = b"PAMIMG1"
RAW_SUFFIXES = (".pamimg",)
PNG_SUFFIXES = (".png",)


class InvalidImageError(ValueError):
    """Raised for empty, non 2-D or otherwise unusable image input."""


def check_image(img, name="image", dtype=np.float64):
    """Validate ``img`` as a non-empty 2-D array and return it as ``dtype``."""
    arr = np.asarray(img, dtype=dtype)
    if arr.ndim != 2:
        raise InvalidImageError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidImageError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidImageError(f"{name} contains non-finite values")
    return arr


def normalize_percentile(img, lo=0.05, hi=99.95):
    """Clip to the ``[lo, hi]`` percentile range and rescale to ``[0, 1]``.

    Constant images map to all zeros.
    """
    img = check_image(img)
    if not 0.0 <= lo < hi <= 100.0:
        raise ValueError(f"need 0 <= lo < hi <= 100, got lo={lo}, hi={hi}")
    p_lo, p_hi = np.percentile(img, [lo, hi])
    if p_hi <= p_lo:
        return np.zeros_like(img)
    out = (np.clip(img, p_lo, p_hi) - p_lo) / (p_hi - p_lo)
    # rounding in the division can leave the extremes a hair off
    return np.clip(out, 0.0, 1.0)


def median_filter_directional(img, window):
    """3-tap median along one axis with replicate edges.

    ``window`` is ``(3, 1)`` (vertical, along rows) or ``(1, 3)`` (horizontal).
    """
    img = check_image(img)
    window = tuple(window)
    if window == (3, 1):
        axis = 0
    elif window == (1, 3):
        axis = 1
    else:
        raise ValueError(f"window must be (3, 1) or (1, 3), got {window}")
    pad = [(0, 0), (0, 0)]
    pad[axis] = (1, 1)
    padded = np.pad(img, pad, mode="edge")
    n = img.shape[axis]
    taps = [np.take(padded, np.arange(i, i + n), axis=axis) for i in range(3)]
    return np.median(np.stack(taps), axis=0)


def threshold_denoise(img, floor=0.0):
    """Zero every pixel strictly below ``floor``."""
    img = check_image(img)
    if not 0.0 <= floor <= 1.0:
        raise ValueError(f"floor must lie in [0, 1], got {floor}")
    return np.where(img < floor, 0.0, img)


def preprocess(img, floor=0.0, lo=0.05, hi=99.95):
    """Ingestion chain: threshold, 3x1 and 1x3 medians, percentile rescale."""
    out = threshold_denoise(img, floor)
    out = median_filter_directional(out, (3, 1))
    out = median_filter_directional(out, (1, 3))
    return normalize_percentile(out, lo, hi)


@dataclass(frozen=True)
class CropRecord:
    """Region of a padded image that holds the original pixels."""

    height: int
    width: int

    def apply(self, padded):
        return padded[..., : self.height, : self.width]


def pad_to_multiple(img, m):
    """Zero-pad bottom/right so both dims are multiples of ``m``."""
    img = check_image(img)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    h, w = img.shape
    ph = -(-h // m) * m
    pw = -(-w // m) * m
    padded = np.zeros((ph, pw), dtype=img.dtype)
    padded[:h, :w] = img
    return padded, CropRecord(h, w)


def _suffix(path):
    return os.path.splitext(str(path))[1].lower()


def read_raw(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(RAW_MAGIC)] != RAW_MAGIC:
        raise InvalidImageError(f"{path}: bad magic, not a PAMIMG1 file")
    off = len(RAW_MAGIC)
    if len(blob) < off + 8:
        raise InvalidImageError(f"{path}: truncated header")
    h, w = struct.unpack_from("<II", blob, off)
    off += 8
    expected = h * w * 4
    if h < 1 or w < 1 or len(blob) - off != expected:
        raise InvalidImageError(
            f"{path}: payload is {len(blob) - off} bytes, expected {expected} for {h}x{w}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=off).reshape(h, w)
    return data.astype(np.float64)


def write_raw(path, img):
    img = check_image(img)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(RAW_MAGIC)
        fh.write(struct.pack("<II", h, w))
        fh.write(np.ascontiguousarray(img, dtype="<f4").tobytes())


def png_bit_depth(path):
    """Return 8 or 16 for a single-channel PNG."""
    with PILImage.open(path) as im:
        return 16 if im.mode in ("I;16", "I;16B", "I;16L", "I") else 8


def read_png(path):
    with PILImage.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        else:
            if im.mode != "L":
                im = im.convert("L")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    return check_image(arr)


def write_png(path, img, bit_depth=16):
    img = np.clip(check_image(img), 0.0, 1.0)
    if bit_depth == 8:
        PILImage.fromarray(np.round(img * 255.0).astype(np.uint8), mode="L").save(path)
    elif bit_depth == 16:
        data = np.round(img * 65535.0).astype(np.uint16)
        PILImage.fromarray(data).save(path)
    else:
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")


def is_supported(path):
    return _suffix(path) in PNG_SUFFIXES + RAW_SUFFIXES


def read_image(path):
    """Load a PNG (8/16-bit, scaled to [0, 1]) or PAMIMG1 raw file."""
    suffix = _suffix(path)
    if suffix in RAW_SUFFIXES:
        return read_raw(path)
    if suffix in PNG_SUFFIXES:
        try:
            return read_png(path)
        except InvalidImageError:
            raise
        except Exception as exc:  # PIL raises a zoo of types on bad files
            raise InvalidImageError(f"{path}: {exc}") from exc
    raise InvalidImageError(f"{path}: unsupported file type {suffix!r}")


def write_image(path, img, bit_depth=16):
    """Write by extension; PNG output is clipped to [0, 1]."""
    suffix = _suffix(path)
    if suffix in RAW_SUFFIXES:
        write_raw(path, img)
    elif suffix in PNG_SUFFIXES:
        write_png(path, img, bit_depth=bit_depth)
    else:
        raise InvalidImageError(f"{path}: unsupported file type {suffix!r}")
