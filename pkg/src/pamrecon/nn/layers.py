"""Layers with explicit forward/backward passes over NHWC arrays.

Each layer caches what its backward pass needs during ``forward`` and
stores parameter gradients in ``self.grads`` when ``backward`` runs. A
layer instance may appear only once in a graph per forward pass.
"""
from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    """Incompatible tensor shapes."""


class ConfigError(ValueError):
    """Invalid model or layer configuration."""


class Module:
    """Container of parameters, buffers and child modules, in insertion order."""

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self.children = {}

    def add(self, name, module):
        self.children[name] = module
        return module

    def named_parameters(self, prefix=""):
        for k, v in self.params.items():
            yield prefix + k, v
        for name, child in self.children.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_grads(self, prefix=""):
        for k in self.params:
            yield prefix + k, self.grads.get(k)
        for name, child in self.children.items():
            yield from child.named_grads(f"{prefix}{name}.")

    def named_buffers(self, prefix=""):
        for k, v in self.buffers.items():
            yield prefix + k, v
        for name, child in self.children.items():
            yield from child.named_buffers(f"{prefix}{name}.")

    def modules(self, prefix=""):
        yield prefix.rstrip("."), self
        for name, child in self.children.items():
            yield from child.modules(f"{prefix}{name}.")

    def astype(self, dtype):
        for _, m in self.modules():
            for d in (m.params, m.buffers):
                for k in d:
                    d[k] = d[k].astype(dtype)
            m.grads = {}
        return self

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def output_shape(self, shape):
        raise NotImplementedError


def same_padding(n, k, s):
    """TF-style 'same' padding: returns (before, after, out)."""
    out = -(-n // s)
    total = max((out - 1) * s + k - n, 0)
    return total // 2, total - total // 2, out


def he_uniform(rng, shape, fan_in, dtype=np.float32):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D(Module):
    """2-D cross-correlation with 'same' zero padding and stride 1 or 2."""

    def __init__(self, c_in, c_out, kernel=3, stride=1, rng=None):
        super().__init__()
        if stride not in (1, 2):
            raise ConfigError(f"stride must be 1 or 2, got {stride}")
        self.c_in, self.c_out, self.kernel, self.stride = c_in, c_out, kernel, stride
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = kernel * kernel * c_in
        self.params["weight"] = he_uniform(rng, (kernel, kernel, c_in, c_out), fan_in)
        self.params["bias"] = np.zeros(c_out, dtype=np.float32)

    def output_shape(self, shape):
        n, h, w, c = shape
        if c != self.c_in:
            raise ShapeError(f"conv expects {self.c_in} channels, got {c}")
        return (n, -(-h // self.stride), -(-w // self.stride), self.c_out)

    def forward(self, x, training=False):
        n, h, w, c = x.shape
        if c != self.c_in:
            raise ShapeError(f"conv expects {self.c_in} channels, got {c}")
        k, s = self.kernel, self.stride
        wt = self.params["weight"]
        x = x.astype(wt.dtype, copy=False)
        pt, pb, ho = same_padding(h, k, s)
        pl, pr, wo = same_padding(w, k, s)
        if k == 1 and s == 1:
            cols = x.reshape(-1, c)
        else:
            xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
            cols = np.concatenate(
                [xp[:, i : i + s * ho : s, j : j + s * wo : s, :] for i in range(k) for j in range(k)],
                axis=-1,
            ).reshape(-1, k * k * c)
        self._cache = (x.shape, cols, pt, pl, ho, wo)
        out = cols @ wt.reshape(-1, self.c_out) + self.params["bias"]
        return out.reshape(n, ho, wo, self.c_out)

    def backward(self, grad):
        shape, cols, pt, pl, ho, wo = self._cache
        n, h, w, c = shape
        k, s = self.kernel, self.stride
        wt = self.params["weight"]
        g = grad.reshape(-1, self.c_out)
        self.grads["bias"] = g.sum(axis=0)
        self.grads["weight"] = (cols.T @ g).reshape(wt.shape)
        dcols = g @ wt.reshape(-1, self.c_out).T
        if k == 1 and s == 1:
            return dcols.reshape(shape)
        dcols = dcols.reshape(n, ho, wo, k, k, c)
        hp = max(h + pt, (ho - 1) * s + k)
        wp = max(w + pl, (wo - 1) * s + k)
        dxp = np.zeros((n, hp, wp, c), dtype=dcols.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i : i + s * ho : s, j : j + s * wo : s, :] += dcols[:, :, :, i, j, :]
        return dxp[:, pt : pt + h, pl : pl + w, :]


class BatchNorm(Module):
    """Per-channel batch normalization; ``running = m * running + (1 - m) * batch``."""

    def __init__(self, channels, momentum=0.99, eps=1e-3):
        super().__init__()
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.params["gamma"] = np.ones(channels, dtype=np.float32)
        self.params["beta"] = np.zeros(channels, dtype=np.float32)
        self.buffers["running_mean"] = np.zeros(channels, dtype=np.float32)
        self.buffers["running_var"] = np.ones(channels, dtype=np.float32)

    def output_shape(self, shape):
        if shape[-1] != self.channels:
            raise ShapeError(f"batch norm expects {self.channels} channels, got {shape[-1]}")
        return shape

    def forward(self, x, training=False):
        gamma, beta = self.params["gamma"], self.params["beta"]
        x = x.astype(gamma.dtype, copy=False)
        if training:
            mean = x.mean(axis=(0, 1, 2))
            var = x.var(axis=(0, 1, 2))
            m = self.momentum
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            self.buffers["running_mean"] = (m * rm + (1 - m) * mean).astype(rm.dtype)
            self.buffers["running_var"] = (m * rv + (1 - m) * var).astype(rv.dtype)
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, training)
        return xhat * gamma + beta

    def backward(self, grad):
        xhat, inv_std, training = self._cache
        gamma = self.params["gamma"]
        self.grads["gamma"] = (grad * xhat).sum(axis=(0, 1, 2))
        self.grads["beta"] = grad.sum(axis=(0, 1, 2))
        dxhat = grad * gamma
        if not training:
            return dxhat * inv_std
        count = xhat.size // xhat.shape[-1]
        sum_d = dxhat.sum(axis=(0, 1, 2))
        sum_dx = (dxhat * xhat).sum(axis=(0, 1, 2))
        return (inv_std / count) * (count * dxhat - sum_d - xhat * sum_dx)


class ELU(Module):
    def __init__(self, alpha=1.0):
        super().__init__()
        self.alpha = alpha

    def output_shape(self, shape):
        return shape

    def forward(self, x, training=False):
        out = np.where(x > 0, x, self.alpha * np.expm1(np.minimum(x, 0)))
        self._cache = (x > 0, out)
        return out

    def backward(self, grad):
        pos, out = self._cache
        return grad * np.where(pos, 1.0, out + self.alpha).astype(grad.dtype)


class Upsample2x(Module):
    """Nearest-neighbour 2x upsampling."""

    def output_shape(self, shape):
        n, h, w, c = shape
        return (n, 2 * h, 2 * w, c)

    def forward(self, x, training=False):
        return x.repeat(2, axis=1).repeat(2, axis=2)

    def backward(self, grad):
        n, h2, w2, c = grad.shape
        return grad.reshape(n, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4))


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        for i, layer in enumerate(layers):
            self.add(str(i), layer)

    def output_shape(self, shape):
        for layer in self.children.values():
            shape = layer.output_shape(shape)
        return shape

    def forward(self, x, training=False):
        for layer in self.children.values():
            x = layer.forward(x, training)
        return x

    def backward(self, grad):
        for layer in reversed(list(self.children.values())):
            grad = layer.backward(grad)
        return grad
