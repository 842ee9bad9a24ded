"""Parameter-holding building blocks for the denoising networks.

A :class:`Module` auto-registers ``Tensor`` attributes and child modules in
definition order, so ``named_params`` yields a stable, deterministic naming of
every parameter. Initialization draws exclusively from a supplied
:class:`~tcve.rng.CounterRng`.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .rng import CounterRng
from .tensor import Tensor


def norm_group_count(channels: int, ceiling: int = 8) -> int:
    """Largest divisor of ``channels`` not exceeding ``ceiling``."""
    for g in range(min(ceiling, channels), 0, -1):
        if channels % g == 0:
            return g
    return 1


def timestep_embedding(t: int, dim: int, dtype=np.float32) -> Tensor:
    """Sinusoidal embedding of a diffusion timestep, shape (1, dim)."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    angles = float(t) * freqs
    emb = np.concatenate([np.sin(angles), np.cos(angles)])
    if dim % 2:
        emb = np.concatenate([emb, np.zeros(1)])
    return Tensor(emb.reshape(1, dim).astype(dtype))


class Module:
    """Base container; walks attributes for parameters and children."""

    def _entries(self):
        for name, value in vars(self).items():
            if isinstance(value, (Tensor, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Tensor, Module)):
                        yield f"{name}{i}", item

    def named_params(self, prefix: str = ""):
        for name, value in self._entries():
            full = f"{prefix}.{name}" if prefix else name
            if isinstance(value, Tensor):
                yield full, value
            else:
                yield from value.named_params(full)

    def params(self) -> list[Tensor]:
        return [t for _, t in self.named_params()]

    def zero_grad(self) -> None:
        for t in self.params():
            t.grad = None


def _he_normal(rng: CounterRng, shape: tuple[int, ...], fan_in: int, scale: float, dtype) -> Tensor:
    std = scale / np.sqrt(fan_in)
    return Tensor(rng.normal(shape, dtype=np.float64) * std, requires_grad=True, dtype=dtype)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: CounterRng,
                 scale: float = 1.0, dtype=np.float32):
        self.w = _he_normal(rng, (out_features, in_features), in_features, scale, dtype)
        self.b = Tensor(np.zeros(out_features), requires_grad=True, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.w, self.b)


class ConvNd(Module):
    _fn = {1: ops.conv1d, 2: ops.conv2d, 3: ops.conv3d}

    def __init__(self, nd: int, in_ch: int, out_ch: int, kernel: int, rng: CounterRng,
                 stride: int = 1, pad: int | None = None, scale: float = 1.0, dtype=np.float32):
        self.nd = nd
        self.stride = stride
        self.pad = kernel // 2 if pad is None else pad
        shape = (out_ch, in_ch) + (kernel,) * nd
        self.w = _he_normal(rng, shape, in_ch * kernel ** nd, scale, dtype)
        self.b = Tensor(np.zeros(out_ch), requires_grad=True, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self._fn[self.nd](x, self.w, self.b, stride=self.stride, pad=self.pad)

    def make_dirac(self) -> "ConvNd":
        """Reinitialize so the convolution reproduces its input exactly."""
        w = np.zeros(self.w.shape, dtype=self.w.dtype)
        center = tuple(k // 2 for k in self.w.shape[2:])
        for c in range(min(self.w.shape[0], self.w.shape[1])):
            w[(c, c) + center] = 1.0
        self.w.data = w
        self.b.data = np.zeros_like(self.b.data)
        return self


def conv1d_layer(in_ch, out_ch, kernel, rng, **kw) -> ConvNd:
    return ConvNd(1, in_ch, out_ch, kernel, rng, **kw)


def conv2d_layer(in_ch, out_ch, kernel, rng, **kw) -> ConvNd:
    return ConvNd(2, in_ch, out_ch, kernel, rng, **kw)


def conv3d_layer(in_ch, out_ch, kernel, rng, **kw) -> ConvNd:
    return ConvNd(3, in_ch, out_ch, kernel, rng, **kw)


class GroupNorm(Module):
    def __init__(self, channels: int, dtype=np.float32, ceiling: int = 8):
        self.groups = norm_group_count(channels, ceiling)
        self.gain = Tensor(np.ones(channels), requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(channels), requires_grad=True, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.group_norm(x, self.groups, self.gain, self.bias)


class TimeMlp(Module):
    """Sinusoidal embedding -> two-layer MLP shared by a Unet's blocks."""

    def __init__(self, dim: int, rng: CounterRng, dtype=np.float32):
        self.dim = dim
        self.dtype = dtype
        self.fc1 = Linear(dim, dim, rng, dtype=dtype)
        self.fc2 = Linear(dim, dim, rng, dtype=dtype)

    def __call__(self, t: int) -> Tensor:
        emb = timestep_embedding(t, self.dim, dtype=self.dtype)
        return self.fc2(ops.silu(self.fc1(emb)))


class ResBlock(Module):
    """norm -> silu -> conv -> +time bias -> norm -> silu -> conv, residual."""

    def __init__(self, nd: int, in_ch: int, out_ch: int, time_dim: int, rng: CounterRng,
                 dtype=np.float32):
        self.nd = nd
        self.norm1 = GroupNorm(in_ch, dtype=dtype)
        self.conv1 = ConvNd(nd, in_ch, out_ch, 3, rng, dtype=dtype)
        self.time_proj = Linear(time_dim, out_ch, rng, dtype=dtype)
        self.norm2 = GroupNorm(out_ch, dtype=dtype)
        self.conv2 = ConvNd(nd, out_ch, out_ch, 3, rng, dtype=dtype)
        if in_ch != out_ch:
            self.skip = ConvNd(nd, in_ch, out_ch, 1, rng, dtype=dtype)
        else:
            self.skip = None

    def __call__(self, x: Tensor, t_emb: Tensor) -> Tensor:
        h = self.conv1(ops.silu(self.norm1(x)))
        bias = self.time_proj(ops.silu(t_emb))
        h = h + bias.reshape(bias.shape + (1,) * self.nd)
        h = self.conv2(ops.silu(self.norm2(h)))
        res = x if self.skip is None else self.skip(x)
        return h + res
