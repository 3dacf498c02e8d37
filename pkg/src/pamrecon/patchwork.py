"""Three-pass tiled inference for images larger than the model's tile.

Pass 1 tiles the padded image without overlap. Pass 2 re-infers tiles
centred on every interior seam line (once for horizontal seams, once for
vertical ones) and overwrites a ``buffer``-deep strip on each side of the
seam. Pass 3 re-infers tiles centred on seam intersections and overwrites
the ``2*buffer`` square around each. Passes 2 and 3 always read from the
original sparse image.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .image import check_image, pad_to_multiple
from .nn.layers import ConfigError


@dataclass(frozen=True)
class Region:
    """Tile origin plus the canvas rectangle it is allowed to write."""

    origin: tuple
    rows: tuple
    cols: tuple


@dataclass(frozen=True)
class PatchPlan:
    padded_shape: tuple
    tile: int = 128
    buffer: int = 20
    pass1: list = field(default_factory=list)
    pass2: list = field(default_factory=list)
    pass3: list = field(default_factory=list)

    @property
    def row_seams(self):
        return [self.tile * j for j in range(1, self.padded_shape[0] // self.tile)]

    @property
    def col_seams(self):
        return [self.tile * j for j in range(1, self.padded_shape[1] // self.tile)]

    def overwrite_mask(self):
        """Pixels rewritten by passes 2 and 3."""
        mask = np.zeros(self.padded_shape, dtype=bool)
        for reg in self.pass2 + self.pass3:
            mask[slice(*reg.rows), slice(*reg.cols)] = True
        return mask

    def seam_zone_mask(self):
        """Pixels within ``buffer`` of an interior seam."""
        mask = np.zeros(self.padded_shape, dtype=bool)
        b = self.buffer
        for s in self.row_seams:
            mask[s - b : s + b, :] = True
        for s in self.col_seams:
            mask[:, s - b : s + b] = True
        return mask


def plan_patches(shape, tile=128, buffer=20):
    h, w = shape
    if h % tile or w % tile:
        raise ValueError(f"dims {shape} are not multiples of tile {tile}; pad first")
    if not 0 < buffer <= tile // 2:
        raise ValueError(f"buffer must be in (0, {tile // 2}], got {buffer}")
    half = tile // 2
    nr, nc = h // tile, w // tile
    pass1 = [
        Region((r * tile, c * tile), (r * tile, (r + 1) * tile), (c * tile, (c + 1) * tile))
        for r in range(nr)
        for c in range(nc)
    ]
    pass2 = []
    # horizontal seams: tiles shifted down by half a tile
    for j in range(1, nr):
        s = j * tile
        for c in range(nc):
            pass2.append(Region((s - half, c * tile), (s - buffer, s + buffer), (c * tile, (c + 1) * tile)))
    # vertical seams: tiles shifted right by half a tile
    for j in range(1, nc):
        s = j * tile
        for r in range(nr):
            pass2.append(Region((r * tile, s - half), (r * tile, (r + 1) * tile), (s - buffer, s + buffer)))
    pass3 = [
        Region((i * tile - half, j * tile - half), (i * tile - buffer, i * tile + buffer), (j * tile - buffer, j * tile + buffer))
        for i in range(1, nr)
        for j in range(1, nc)
    ]
    return PatchPlan((h, w), tile, buffer, pass1, pass2, pass3)


def _as_predict(model):
    if hasattr(model, "predict"):
        return model.predict
    if callable(model):
        return model
    raise TypeError("model must be callable or expose predict(images)")


def _run_pass(predict, sparse, regions, canvas, tile, batch_size):
    for start in range(0, len(regions), batch_size):
        chunk = regions[start : start + batch_size]
        tiles = np.stack([sparse[r : r + tile, c : c + tile] for r, c in (reg.origin for reg in chunk)])
        out = np.asarray(predict(tiles), dtype=np.float64)
        if out.shape != tiles.shape:
            raise ConfigError(f"model maps tiles {tiles.shape} to {out.shape}; tile size mismatch")
        for reg, patch in zip(chunk, out):
            r0, c0 = reg.origin
            rows, cols = slice(*reg.rows), slice(*reg.cols)
            canvas[rows, cols] = patch[rows.start - r0 : rows.stop - r0, cols.start - c0 : cols.stop - c0]


def patchwork_reconstruct(model, sparse_img, tile=128, buffer=20, batch_size=8, plan=None):
    """Reconstruct an arbitrary-size zero-filled image with a fixed-tile model.

    ``model`` is a callable (or has ``predict``) mapping a ``(n, tile, tile)``
    stack to an array of the same shape. Output has the input's shape.
    """
    sparse = check_image(sparse_img, "sparse_img")
    padded, crop = pad_to_multiple(sparse, tile)
    if plan is None:
        plan = plan_patches(padded.shape, tile, buffer)
    elif plan.padded_shape != padded.shape or plan.tile != tile:
        raise ConfigError("patch plan does not match the padded image")
    predict = _as_predict(model)
    canvas = np.zeros_like(padded)
    for regions in (plan.pass1, plan.pass2, plan.pass3):
        _run_pass(predict, padded, regions, canvas, tile, batch_size)
    return crop.apply(canvas)
