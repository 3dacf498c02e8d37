"""Fully dense U-net and plain U-net built from the layers in ``layers``."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .layers import (
    ELU,
    BatchNorm,
    ConfigError,
    Conv2D,
    Module,
    Sequential,
    ShapeError,
    Upsample2x,
)

ARCHITECTURES = ("fd_unet", "unet")


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = "fd_unet"
    depth_levels: int = 4
    base_filters: int = 32
    dense_layers: int = 4
    bn_momentum: float = 0.99
    bn_epsilon: float = 0.001

    def validate(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.depth_levels < 1:
            raise ConfigError(f"depth_levels must be >= 1, got {self.depth_levels}")
        if self.base_filters < 4 or self.base_filters % 4:
            raise ConfigError(f"base_filters must be a positive multiple of 4, got {self.base_filters}")
        if self.dense_layers < 1:
            raise ConfigError(f"dense_layers must be >= 1, got {self.dense_layers}")
        return self

    @property
    def multiple(self):
        """Spatial dims must be divisible by this."""
        return 2 ** (self.depth_levels - 1)

    def as_dict(self):
        return asdict(self)


class ConvBlock(Sequential):
    """Convolution -> ELU -> batch norm."""

    def __init__(self, c_in, c_out, kernel=3, stride=1, rng=None, momentum=0.99, eps=1e-3):
        super().__init__(
            Conv2D(c_in, c_out, kernel, stride, rng),
            ELU(),
            BatchNorm(c_out, momentum, eps),
        )
        self.c_in, self.c_out = c_in, c_out


class DenseBlock(Module):
    """Growth layers see the concatenation of the block input and all prior outputs.

    With ``n_layers`` growth layers of ``k = f_in / 4`` maps each, the
    concatenated output carries ``f_in + n_layers * k`` channels, which is
    ``2 * f_in`` for the default four layers.
    """

    def __init__(self, f_in, n_layers=4, rng=None, momentum=0.99, eps=1e-3):
        super().__init__()
        if f_in % 4:
            raise ConfigError(f"dense block input channels must be divisible by 4, got {f_in}")
        self.f_in = f_in
        self.k = f_in // 4
        self.f_out = f_in + n_layers * self.k
        c = f_in
        for i in range(n_layers):
            self.add(f"layer{i}", ConvBlock(c, self.k, 3, 1, rng, momentum, eps))
            c += self.k

    def output_shape(self, shape):
        if shape[-1] != self.f_in:
            raise ShapeError(f"dense block expects {self.f_in} channels, got {shape[-1]}")
        return shape[:-1] + (self.f_out,)

    def forward(self, x, training=False):
        feats = x
        for layer in self.children.values():
            feats = np.concatenate([feats, layer.forward(feats, training)], axis=-1)
        return feats

    def backward(self, grad):
        grad = grad.copy()
        layers = list(self.children.values())
        for layer in reversed(layers):
            c_prev = layer.c_in
            g_in = layer.backward(grad[..., c_prev:])
            grad = grad[..., :c_prev] + g_in
        return grad


class PlainBlock(Sequential):
    """Two 3x3 conv blocks, ``f_in -> 2 f_in -> 2 f_in``; the U-net stand-in for a dense block."""

    def __init__(self, f_in, rng=None, momentum=0.99, eps=1e-3):
        self.f_in, self.f_out = f_in, 2 * f_in
        super().__init__(
            ConvBlock(f_in, 2 * f_in, 3, 1, rng, momentum, eps),
            ConvBlock(2 * f_in, 2 * f_in, 3, 1, rng, momentum, eps),
        )


class DownBlock(Sequential):
    """1x1 conv block then 3x3 stride-2 conv block; channel count unchanged."""

    def __init__(self, channels, rng=None, momentum=0.99, eps=1e-3):
        super().__init__(
            ConvBlock(channels, channels, 1, 1, rng, momentum, eps),
            ConvBlock(channels, channels, 3, 2, rng, momentum, eps),
        )


class UpBlock(Module):
    """Upsample + 3x3 conv block, concat with skip, 1x1 reduction, level block."""

    def __init__(self, c_in, c_skip, f_level, level_block, rng=None, momentum=0.99, eps=1e-3):
        super().__init__()
        self.c_skip = c_skip
        self.c_up = f_level
        self.add("upsample", Upsample2x())
        self.add("up_conv", ConvBlock(c_in, f_level, 3, 1, rng, momentum, eps))
        self.add("reduce", ConvBlock(f_level + c_skip, f_level, 1, 1, rng, momentum, eps))
        self.add("block", level_block)

    def output_shape(self, shape, skip_shape):
        up = self.children["up_conv"].output_shape(self.children["upsample"].output_shape(shape))
        if skip_shape[:3] != up[:3]:
            raise ShapeError(f"skip {skip_shape} does not match upsampled {up}")
        if skip_shape[-1] != self.c_skip:
            raise ShapeError(f"skip expects {self.c_skip} channels, got {skip_shape[-1]}")
        cat = up[:3] + (up[-1] + skip_shape[-1],)
        return self.children["block"].output_shape(self.children["reduce"].output_shape(cat))

    def forward(self, x, skip, training=False):
        up = self.children["up_conv"].forward(self.children["upsample"].forward(x, training), training)
        if skip.shape[:3] != up.shape[:3]:
            raise ShapeError(f"skip {skip.shape} does not match upsampled {up.shape}")
        cat = np.concatenate([up, skip.astype(up.dtype, copy=False)], axis=-1)
        return self.children["block"].forward(self.children["reduce"].forward(cat, training), training)

    def backward(self, grad):
        g = self.children["block"].backward(grad)
        g = self.children["reduce"].backward(g)
        g_up, g_skip = g[..., : self.c_up], g[..., self.c_up :]
        g_x = self.children["upsample"].backward(self.children["up_conv"].backward(g_up))
        return g_x, g_skip


class ReconstructionNet(Module):
    """Encoder-decoder mapping a 1-channel sparse image to a 1-channel reconstruction.

    Level ``l`` (1-based) works at ``1 / 2**(l-1)`` of the input resolution
    with ``f_l = base * 2**(l-1)`` input channels. The final 1x1 convolution
    is linear.
    """

    def __init__(self, cfg, rng=None):
        super().__init__()
        self.cfg = cfg.validate()
        rng = rng if rng is not None else np.random.default_rng(0)
        mom, eps = cfg.bn_momentum, cfg.bn_epsilon
        depth, base = cfg.depth_levels, cfg.base_filters

        def level_block(f):
            if cfg.architecture == "fd_unet":
                return DenseBlock(f, cfg.dense_layers, rng, mom, eps)
            return PlainBlock(f, rng, mom, eps)

        self.add("stem", ConvBlock(1, base, 3, 1, rng, mom, eps))
        self.skip_channels = []
        for lvl in range(1, depth):
            f = base * 2 ** (lvl - 1)
            block = self.add(f"enc{lvl}", level_block(f))
            self.add(f"down{lvl}", DownBlock(block.f_out, rng, mom, eps))
            self.skip_channels.append(block.f_out)
        f = base * 2 ** (depth - 1)
        bottom = self.add("bottleneck", level_block(f))
        c = bottom.f_out
        for lvl in range(depth - 1, 0, -1):
            f = base * 2 ** (lvl - 1)
            up = self.add(
                f"up{lvl}",
                UpBlock(c, self.skip_channels[lvl - 1], f, level_block(f), rng, mom, eps),
            )
            c = up.children["block"].f_out
        self.add("head", Conv2D(c, 1, 1, 1, rng))

    @property
    def dtype(self):
        return self.children["head"].params["weight"].dtype

    def _check_input(self, shape):
        if len(shape) != 4 or shape[-1] != 1:
            raise ShapeError(f"expected input of shape (batch, h, w, 1), got {shape}")
        m = self.cfg.multiple
        if shape[1] % m or shape[2] % m:
            raise ShapeError(f"spatial dims {shape[1:3]} must be divisible by {m}")

    def output_shape(self, shape):
        return self.graph(shape)[-1][-1]

    def graph(self, shape):
        """Shape propagation without computation: ``[(name, kind, in, out), ...]``."""
        shape = tuple(shape)
        self._check_input(shape)
        depth = self.cfg.depth_levels
        rows = []

        def step(name, x_shape):
            mod = self.children[name]
            out = mod.output_shape(x_shape)
            rows.append((name, type(mod).__name__, x_shape, out))
            return out

        x = step("stem", shape)
        skips = []
        for lvl in range(1, depth):
            x = step(f"enc{lvl}", x)
            skips.append(x)
            x = step(f"down{lvl}", x)
        x = step("bottleneck", x)
        for lvl in range(depth - 1, 0, -1):
            mod = self.children[f"up{lvl}"]
            out = mod.output_shape(x, skips[lvl - 1])
            rows.append((f"up{lvl}", "UpBlock", x, out))
            x = out
        step("head", x)
        return rows

    def forward(self, x, training=False):
        x = np.asarray(x)
        self._check_input(x.shape)
        x = x.astype(self.dtype, copy=False)
        ch = self.children
        depth = self.cfg.depth_levels
        x = ch["stem"].forward(x, training)
        skips = []
        for lvl in range(1, depth):
            x = ch[f"enc{lvl}"].forward(x, training)
            skips.append(x)
            x = ch[f"down{lvl}"].forward(x, training)
        x = ch["bottleneck"].forward(x, training)
        for lvl in range(depth - 1, 0, -1):
            x = ch[f"up{lvl}"].forward(x, skips[lvl - 1], training)
        return ch["head"].forward(x, training)

    def backward(self, grad):
        """Backpropagate ``dLoss/dOutput``; fills ``grads`` and returns ``dLoss/dInput``."""
        ch = self.children
        depth = self.cfg.depth_levels
        g = ch["head"].backward(grad.astype(self.dtype, copy=False))
        skip_grads = {}
        for lvl in range(1, depth):
            g, skip_grads[lvl] = ch[f"up{lvl}"].backward(g)
        g = ch["bottleneck"].backward(g)
        for lvl in range(depth - 1, 0, -1):
            g = ch[f"down{lvl}"].backward(g)
            g = ch[f"enc{lvl}"].backward(g + skip_grads[lvl])
        return ch["stem"].backward(g)

    def __call__(self, x):
        return self.forward(x, training=False)

    def predict(self, images):
        """Inference on a stack ``(n, h, w)`` of 2-D images."""
        images = np.asarray(images)
        out = self.forward(images[..., None], training=False)
        return out[..., 0]

    def parameter_count(self):
        return sum(p.size for _, p in self.named_parameters())

    def state_dict(self):
        state = {k: v.copy() for k, v in self.named_parameters()}
        state.update({k: v.copy() for k, v in self.named_buffers()})
        return state

    def load_state_dict(self, state):
        expected = [k for k, _ in self.named_parameters()] + [k for k, _ in self.named_buffers()]
        missing = [k for k in expected if k not in state]
        extra = [k for k in state if k not in expected]
        if missing or extra:
            raise ConfigError(f"state mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for prefix, mod in self.modules():
            pre = f"{prefix}." if prefix else ""
            for store in (mod.params, mod.buffers):
                for k in store:
                    val = np.asarray(state[pre + k])
                    if val.shape != store[k].shape:
                        raise ConfigError(f"{pre + k}: shape {val.shape} != {store[k].shape}")
                    store[k] = val.astype(store[k].dtype).copy()
        return self


def build_model(cfg=None, seed=0):
    """Construct a freshly initialized network for ``cfg``."""
    cfg = cfg or ModelConfig()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return ReconstructionNet(cfg, rng)
