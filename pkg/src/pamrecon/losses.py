"""Pixel-domain and Fourier-magnitude MAE losses with analytic gradients.

Tensors are NHWC. Both losses take the mean over every element, which is
the per-image mean averaged over the batch. The DFT is unnormalized.
"""
from __future__ import annotations

import numpy as np

from .nn.layers import ShapeError


def _check_pair(truth, recon):
    truth = np.asarray(truth)
    recon = np.asarray(recon)
    if truth.shape != recon.shape:
        raise ShapeError(f"shape mismatch: {truth.shape} vs {recon.shape}")
    return truth, recon


def loss_mae(truth, recon):
    truth, recon = _check_pair(truth, recon)
    return float(np.mean(np.abs(truth.astype(np.float64) - recon)))


def loss_mae_grad(truth, recon):
    """d(loss_mae)/d(recon); zero at ties."""
    truth, recon = _check_pair(truth, recon)
    return (np.sign(recon - truth) / recon.size).astype(recon.dtype)


def _spectrum(x):
    return np.fft.fft2(x.astype(np.float64), axes=(1, 2))


def loss_fmae(truth, recon):
    truth, recon = _check_pair(truth, recon)
    if truth.ndim != 4:
        raise ShapeError(f"expected NHWC tensors, got {truth.ndim}-D")
    return float(np.mean(np.abs(np.abs(_spectrum(truth)) - np.abs(_spectrum(recon)))))


def loss_fmae_grad(truth, recon):
    """d(loss_fmae)/d(recon), taken as 0 where a recon magnitude is 0."""
    truth, recon = _check_pair(truth, recon)
    zr = _spectrum(recon)
    mag_r = np.abs(zr)
    g_mag = -np.sign(np.abs(_spectrum(truth)) - mag_r) / recon.size
    safe = np.where(mag_r > 0, mag_r, 1.0)
    phase_conj = np.where(mag_r > 0, np.conj(zr) / safe, 0.0)
    grad = np.real(np.fft.fft2(g_mag * phase_conj, axes=(1, 2)))
    return grad.astype(recon.dtype)


def loss_total(truth, recon, lambda1=1.0, lambda2=0.01):
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("loss weights must be non-negative")
    out = lambda1 * loss_mae(truth, recon)
    if lambda2:
        out += lambda2 * loss_fmae(truth, recon)
    return out


def loss_total_grad(truth, recon, lambda1=1.0, lambda2=0.01):
    grad = lambda1 * loss_mae_grad(truth, recon)
    if lambda2:
        grad = grad + lambda2 * loss_fmae_grad(truth, recon)
    return grad
