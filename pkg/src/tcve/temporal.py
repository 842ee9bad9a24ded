"""Temporal Unet: 1D convolutional residual stages over the frame axis, with
every spatial position folded into the batch dimension.

A down stage maps (N, c, f) to (N, 2c, f/2): residual block, then a stride-2
doubling convolution. Up stages mirror it (nearest x2 + convolution, skip
concatenation, residual block). The network produces per-stage features for
fusion; it has no output head of its own.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .config import TemporalUnetConfig
from .layers import ConvNd, Module, ResBlock, TimeMlp, conv1d_layer
from .rng import CounterRng
from .tensor import Tensor, concat


def fold_space(z: Tensor) -> Tensor:
    """(b, c, f, h, w) -> (b*h*w, c, f); the inverse restores it bitwise."""
    if z.ndim != 5:
        raise ValueError(f"fold_space: expected rank 5, got rank {z.ndim}")
    b, c, f, h, w = z.shape
    return z.permute(0, 3, 4, 1, 2).reshape(b * h * w, c, f)


def unfold_space(x: Tensor, batch: int, height: int, width: int) -> Tensor:
    """(b*h*w, c, f) -> (b, c, f, h, w)."""
    if x.ndim != 3:
        raise ValueError(f"unfold_space: expected rank 3, got rank {x.ndim}")
    n, c, f = x.shape
    if n != batch * height * width:
        raise ValueError(
            f"unfold_space: folded batch {n} != batch*height*width = {batch * height * width}")
    return x.reshape(batch, height, width, c, f).permute(0, 3, 4, 1, 2)


class TemporalDownStage(Module):
    """Residual block at c channels, then stride-2 conv doubling to 2c."""

    def __init__(self, channels: int, time_dim: int, blocks: int, rng: CounterRng,
                 dtype=np.float32):
        self.blocks = [ResBlock(1, channels, channels, time_dim, rng, dtype=dtype)
                       for _ in range(blocks)]
        self.pool = ConvNd(1, channels, 2 * channels, 3, rng, stride=2, pad=1, dtype=dtype)

    def __call__(self, x: Tensor, t_emb: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[2] % 2:
            raise ValueError(
                f"temporal down stage needs an even frame extent, got {x.shape[2]}")
        for block in self.blocks:
            x = block(x, t_emb)
        return x, self.pool(x)


class TemporalUpStage(Module):
    """Frames doubled (nearest x2 + conv), channels halved, skip concatenated
    before the residual block."""

    def __init__(self, channels: int, time_dim: int, blocks: int, rng: CounterRng,
                 dtype=np.float32):
        # channels is the output width c; input arrives at 2c.
        self.up = conv1d_layer(2 * channels, channels, 3, rng, dtype=dtype)
        self.blocks = [ResBlock(1, 2 * channels if i == 0 else channels, channels,
                                time_dim, rng, dtype=dtype) for i in range(blocks)]

    def __call__(self, x: Tensor, skip: Tensor, t_emb: Tensor) -> Tensor:
        h = self.up(ops.upsample_nearest(x, (2,)))
        if skip.shape != h.shape:
            raise ValueError(
                f"temporal up stage: skip shape {skip.shape} inconsistent with "
                f"upsampled shape {h.shape}")
        h = concat([h, skip], axis=1)
        for block in self.blocks:
            h = block(h, t_emb)
        return h


class TemporalUnet(Module):
    def __init__(self, cfg: TemporalUnetConfig, latent_channels: int, rng: CounterRng,
                 dtype=np.float32, include_up_path: bool = True):
        self.cfg = cfg
        base = cfg.base_channels or latent_channels
        self.base_channels = base
        self.include_up_path = include_up_path
        self.time_mlp = TimeMlp(cfg.time_dim, rng, dtype=dtype)
        self.conv_in = conv1d_layer(latent_channels, base, 3, rng, dtype=dtype)
        self.downs = [TemporalDownStage(base * 2 ** k, cfg.time_dim, cfg.blocks_per_level,
                                        rng, dtype=dtype) for k in range(cfg.levels - 1)]
        top = base * 2 ** (cfg.levels - 1)
        self.mid = [ResBlock(1, top, top, cfg.time_dim, rng, dtype=dtype)
                    for _ in range(cfg.blocks_per_level)]
        # when up-stage fusion is off the up path would be unconsumed, so it
        # is omitted rather than left as gradient-less trainable weight
        ups = range(cfg.levels - 2, -1, -1) if include_up_path else ()
        self.ups = [TemporalUpStage(base * 2 ** k, cfg.time_dim, cfg.blocks_per_level,
                                    rng, dtype=dtype) for k in ups]

    def stage_ids(self) -> list[str]:
        levels = self.cfg.levels
        ids = [f"down{k}" for k in range(levels - 1)] + ["mid"]
        if self.include_up_path:
            ids += [f"up{k}" for k in range(levels - 2, -1, -1)]
        return ids

    def stage_channels(self, stage_id: str) -> int:
        if stage_id == "mid":
            return self.base_channels * 2 ** (self.cfg.levels - 1)
        level = int(stage_id.lstrip("downup"))
        return self.base_channels * 2 ** level

    def forward(self, x: Tensor, t: int) -> list[tuple[str, Tensor]]:
        """Per-stage temporal features of a folded (b*h*w, c, f) sequence."""
        if x.ndim != 3:
            raise ValueError(f"temporal forward expects rank 3, got rank {x.ndim}")
        div = 2 ** (self.cfg.levels - 1)
        if x.shape[2] % div:
            raise ValueError(
                f"frame extent {x.shape[2]} must be divisible by {div} "
                f"for {self.cfg.levels} levels")
        t_emb = self.time_mlp(t)
        features: list[tuple[str, Tensor]] = []
        h = self.conv_in(x)
        skips = []
        for k, stage in enumerate(self.downs):
            tap, h = stage(h, t_emb)
            features.append((f"down{k}", tap))
            skips.append(tap)
        for block in self.mid:
            h = block(h, t_emb)
        features.append(("mid", h))
        for stage, k in zip(self.ups, range(self.cfg.levels - 2, -1, -1)):
            h = stage(h, skips.pop(), t_emb)
            features.append((f"up{k}", h))
        return features

    def stage_shapes(self, folded_batch: int, frames: int) -> list[tuple[str, tuple[int, ...]]]:
        """Shape ledger: expected (stage, shape) for a (N, c, f) input."""
        out = []
        for sid in self.stage_ids():
            c = self.stage_channels(sid)
            level = self.cfg.levels - 1 if sid == "mid" else int(sid.lstrip("downup"))
            out.append((sid, (folded_batch, c, frames // 2 ** level)))
        return out

    def __call__(self, x: Tensor, t: int):
        return self.forward(x, t)
