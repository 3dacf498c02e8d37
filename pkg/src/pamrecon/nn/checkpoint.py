"""PAMCKPT1 checkpoint files.

Layout (little-endian): 8-byte magic ``PAMCKPT1``, uint32 format version,
uint32 header length + UTF-8 JSON header (model config and training
metadata), uint32 record count, then per record: uint32 name length, name,
uint32 ndim, ndim x uint32 dims, float32 payload.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .model import ModelConfig, ReconstructionNet

MAGIC = b"PAMCKPT1"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def save_checkpoint(path, model, meta=None):
    header = {"model": model.cfg.as_dict(), "meta": meta or {}}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    state = model.state_dict()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(state)))
        for name, arr in state.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, blob, path):
        self.blob, self.off, self.path = blob, 0, path

    def take(self, n):
        if self.off + n > len(self.blob):
            raise CheckpointFormatError(f"{self.path}: truncated checkpoint")
        out = self.blob[self.off : self.off + n]
        self.off += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def read_checkpoint(path):
    """Return ``(ModelConfig, state dict, meta)``."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic, not a PAMCKPT1 checkpoint")
    version = r.u32()
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported format version {version}")
    try:
        header = json.loads(r.take(r.u32()).decode("utf-8"))
        cfg = ModelConfig(**header["model"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"{path}: bad header ({exc})") from exc
    state = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        ndim = r.u32()
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        count = int(np.prod(dims)) if dims else 1
        state[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims).astype(np.float32)
    if r.off != len(r.blob):
        raise CheckpointFormatError(f"{path}: trailing bytes after records")
    return cfg, state, header.get("meta", {})


def load_checkpoint(path):
    """Rebuild the model stored at ``path``; returns ``(model, meta)``."""
    cfg, state, meta = read_checkpoint(path)
    model = ReconstructionNet(cfg)
    model.load_state_dict(state)
    return model, meta
