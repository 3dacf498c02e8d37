"""Synthetic vascular phantoms: bright tortuous vessels on a dark background."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PhantomConfig:
    shape: tuple = (256, 256)
    vessel_count: tuple = (6, 12)
    width: tuple = (0.7, 2.5)  # Gaussian cross-section sigma, pixels
    tortuosity: float = 0.015  # std of heading change per step, radians
    branch_prob: float = 0.01
    intensity: tuple = (0.35, 1.0)
    background: float = 0.02
    seed: int = 0


def _render_point(canvas, y, x, sigma, amp):
    h, w = canvas.shape
    rad = int(np.ceil(3 * sigma))
    r0, r1 = max(int(y) - rad, 0), min(int(y) + rad + 2, h)
    c0, c1 = max(int(x) - rad, 0), min(int(x) + rad + 2, w)
    if r0 >= r1 or c0 >= c1:
        return
    yy = np.arange(r0, r1)[:, None] - y
    xx = np.arange(c0, c1)[None, :] - x
    blob = amp * np.exp(-(yy * yy + xx * xx) / (2 * sigma * sigma))
    np.maximum(canvas[r0:r1, c0:c1], blob, out=canvas[r0:r1, c0:c1])


def _walk(canvas, rng, cfg, y, x, heading, sigma, amp, length, depth=0):
    h, w = canvas.shape
    turn = 0.0
    for _ in range(int(length)):
        # heading follows a smoothed random walk so centrelines stay continuous
        turn = 0.9 * turn + rng.normal(0.0, cfg.tortuosity)
        heading += turn
        y += np.sin(heading)
        x += np.cos(heading)
        if not (-3 * sigma <= y < h + 3 * sigma and -3 * sigma <= x < w + 3 * sigma):
            break
        _render_point(canvas, y, x, sigma, amp)
        if depth < 2 and rng.random() < cfg.branch_prob:
            side = rng.choice([-1.0, 1.0])
            _walk(
                canvas, rng, cfg, y, x,
                heading + side * rng.uniform(0.4, 1.0),
                max(sigma * rng.uniform(0.5, 0.8), 0.5),
                amp * rng.uniform(0.7, 1.0),
                length * rng.uniform(0.2, 0.5),
                depth + 1,
            )


def generate_phantom(cfg=None):
    """Deterministic vessel phantom in ``[0, 1]`` for ``cfg.seed``."""
    cfg = cfg or PhantomConfig()
    h, w = cfg.shape
    rng = np.random.default_rng(cfg.seed)
    canvas = np.zeros((h, w), dtype=np.float64)
    lo, hi = cfg.vessel_count
    n = int(rng.integers(lo, hi + 1)) if hi > 0 else 0
    for _ in range(n):
        y, x = rng.uniform(0, h), rng.uniform(0, w)
        heading = rng.uniform(-np.pi, np.pi)
        sigma = rng.uniform(*cfg.width)
        amp = rng.uniform(*cfg.intensity)
        length = rng.uniform(0.5, 1.5) * max(h, w)
        # grow both ways from the seed point so vessels cross the field
        _walk(canvas, rng, cfg, y, x, heading, sigma, amp, length / 2)
        _walk(canvas, rng, cfg, y, x, heading + np.pi, sigma, amp, length / 2)
    out = cfg.background + (1.0 - cfg.background) * canvas
    return np.clip(out, 0.0, 1.0)


def generate_phantoms(count, cfg=None, seed=0):
    """``count`` phantoms with per-image seeds drawn from one root seed."""
    cfg = cfg or PhantomConfig()
    seeds = np.random.SeedSequence(seed).generate_state(count)
    return [
        generate_phantom(PhantomConfig(**{**cfg.__dict__, "seed": int(s)}))
        for s in seeds
    ]
