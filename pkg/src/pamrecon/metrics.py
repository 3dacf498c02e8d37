"""Image quality metrics: PSNR, SSIM, MAE and MSE."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import convolve2d

from .image import InvalidImageError, check_image

PEAK = 1.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricsReport:
    psnr: float
    ssim: float
    mae: float
    mse: float

    def as_dict(self):
        return asdict(self)


def psnr_from_mse(mse, peak=PEAK):
    """``10 log10(peak^2 / mse)``; ``inf`` when ``mse == 0``."""
    if mse <= 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(truth, recon, data_range=1.0):
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), valid region only.

    Images smaller than the window use the largest odd window that fits.
    """
    x = check_image(truth, "truth")
    y = check_image(recon, "recon")
    if x.shape != y.shape:
        raise InvalidImageError(f"shape mismatch: {x.shape} vs {y.shape}")
    size = min(SSIM_WINDOW, *x.shape)
    if size % 2 == 0:
        size -= 1
    w = gaussian_window(size)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def filt(a):
        return convolve2d(a, w, mode="valid")

    mu_x = filt(x)
    mu_y = filt(y)
    sxx = filt(x * x) - mu_x * mu_x
    syy = filt(y * y) - mu_y * mu_y
    sxy = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def compute_metrics(truth, recon):
    """PSNR/SSIM/MAE/MSE for one image pair (peak value 1.0)."""
    t = check_image(truth, "truth")
    r = check_image(recon, "recon")
    if t.shape != r.shape:
        raise InvalidImageError(f"shape mismatch: {t.shape} vs {r.shape}")
    diff = t - r
    mse = float(np.mean(diff * diff))
    mae = float(np.mean(np.abs(diff)))
    return MetricsReport(psnr=psnr_from_mse(mse), ssim=ssim(t, r), mae=mae, mse=mse)


def summarize(reports):
    """Mean and standard deviation (population) of each metric over ``reports``.

    Infinite PSNR values propagate into the mean as ``inf``.
    """
    if not reports:
        raise ValueError("no reports to summarize")
    out = {}
    for key in ("psnr", "ssim", "mae", "mse"):
        vals = np.array([getattr(r, key) for r in reports], dtype=np.float64)
        if np.all(np.isfinite(vals)):
            out[key] = (float(vals.mean()), float(vals.std()))
        else:
            out[key] = (float(vals.mean()), 0.0 if len(vals) == 1 else math.nan)
    mean = MetricsReport(**{k: v[0] for k, v in out.items()})
    sd = MetricsReport(**{k: v[1] for k, v in out.items()})
    return mean, sd
