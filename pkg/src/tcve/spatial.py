"""Per-frame 2D denoising Unet: the stand-in for the frozen pretrained
text-to-image backbone.

Frames are folded into the batch axis, so the network is frame-independent by
construction. Residual stages expose taps ("down0", ..., "mid", ..., "up0")
whose features can be replaced mid-forward by injected fused features; the
replacement feeds both the next stage and the skip connection.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from . import ops
from .config import SpatialUnetConfig
from .layers import (ConvNd, GroupNorm, Linear, Module, ResBlock, TimeMlp,
                     conv2d_layer)
from .rng import CounterRng
from .stubs import PromptEmbedding
from .tensor import Tensor, concat, matmul, softmax

# The stand-in's weights come from this fixed seed, independent of any
# training seed: the frozen network plays the role of a pretrained model.
PRETRAINED_SEED = 0x5D14


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q kᵀ / sqrt(d)) v over the trailing token/channel axes."""
    d = q.shape[-1]
    scores = matmul(q, k.transpose_last()) * float(1.0 / np.sqrt(d))
    return matmul(softmax(scores, axis=-1), v)


def cross_attention(x_tokens: Tensor, p_tokens: Tensor, to_q: Linear, to_k: Linear,
                    to_v: Linear) -> Tensor:
    """Image tokens attend to prompt tokens (queries from x, keys/values from p)."""
    return scaled_dot_attention(to_q(x_tokens), to_k(p_tokens), to_v(p_tokens))


class SelfAttention2d(Module):
    def __init__(self, channels: int, rng: CounterRng, dtype=np.float32):
        self.to_q = Linear(channels, channels, rng, dtype=dtype)
        self.to_k = Linear(channels, channels, rng, dtype=dtype)
        self.to_v = Linear(channels, channels, rng, dtype=dtype)

    def __call__(self, tokens: Tensor) -> Tensor:
        return scaled_dot_attention(self.to_q(tokens), self.to_k(tokens), self.to_v(tokens))


class CrossAttention2d(Module):
    def __init__(self, channels: int, context_dim: int, rng: CounterRng, dtype=np.float32):
        self.to_q = Linear(channels, channels, rng, dtype=dtype)
        self.to_k = Linear(context_dim, channels, rng, dtype=dtype)
        self.to_v = Linear(context_dim, channels, rng, dtype=dtype)

    def __call__(self, tokens: Tensor, context: Tensor) -> Tensor:
        return cross_attention(tokens, context, self.to_q, self.to_k, self.to_v)


class TransformerBlock2d(Module):
    """Self-attention over pixel tokens, cross-attention to the prompt, FF."""

    def __init__(self, channels: int, text_dim: int, rng: CounterRng, dtype=np.float32):
        self.norm1 = GroupNorm(channels, dtype=dtype)
        self.self_attn = SelfAttention2d(channels, rng, dtype=dtype)
        self.norm2 = GroupNorm(channels, dtype=dtype)
        self.cross_attn = CrossAttention2d(channels, text_dim, rng, dtype=dtype)
        self.norm3 = GroupNorm(channels, dtype=dtype)
        self.ff1 = Linear(channels, 2 * channels, rng, dtype=dtype)
        self.ff2 = Linear(2 * channels, channels, rng, dtype=dtype)

    @staticmethod
    def _tokens(x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        return x.reshape(n, c, h * w).permute(0, 2, 1)

    @staticmethod
    def _grid(tokens: Tensor, shape) -> Tensor:
        n, c, h, w = shape
        return tokens.permute(0, 2, 1).reshape(n, c, h, w)

    def __call__(self, x: Tensor, context: Tensor) -> Tensor:
        shape = x.shape
        x = x + self._grid(self.self_attn(self._tokens(self.norm1(x))), shape)
        x = x + self._grid(self.cross_attn(self._tokens(self.norm2(x)), context), shape)
        t = self._tokens(self.norm3(x))
        return x + self._grid(self.ff2(ops.silu(self.ff1(t))), shape)


class _Stage(Module):
    def __init__(self, in_ch: int, out_ch: int, blocks: int, time_dim: int, text_dim: int,
                 with_attention: bool, rng: CounterRng, dtype=np.float32):
        self.blocks = [ResBlock(2, in_ch if i == 0 else out_ch, out_ch, time_dim, rng,
                                dtype=dtype) for i in range(blocks)]
        self.attn = (TransformerBlock2d(out_ch, text_dim, rng, dtype=dtype)
                     if with_attention else None)

    def __call__(self, x: Tensor, t_emb: Tensor, context: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x, t_emb)
        if self.attn is not None:
            x = self.attn(x, context)
        return x


def fold_frames(z: Tensor) -> Tensor:
    """(b, c, f, h, w) -> (b*f, c, h, w); the inverse restores it bitwise."""
    if z.ndim != 5:
        raise ValueError(f"fold_frames: expected rank 5, got rank {z.ndim}")
    b, c, f, h, w = z.shape
    return z.permute(0, 2, 1, 3, 4).reshape(b * f, c, h, w)


def unfold_frames(x: Tensor, batch: int) -> Tensor:
    """(b*f, c, h, w) -> (b, c, f, h, w)."""
    if x.ndim != 4:
        raise ValueError(f"unfold_frames: expected rank 4, got rank {x.ndim}")
    bf, c, h, w = x.shape
    if bf % batch:
        raise ValueError(f"unfold_frames: folded batch {bf} not divisible by {batch}")
    return x.reshape(batch, bf // batch, c, h, w).permute(0, 2, 1, 3, 4)


StageHook = Mapping[str, "Tensor | Callable[[Tensor], Tensor]"]


class SpatialUnet(Module):
    """Downsampling pass, bottleneck, upsampling pass with concat skips."""

    def __init__(self, cfg: SpatialUnetConfig, rng: CounterRng | None = None,
                 dtype=np.float32):
        if rng is None:
            rng = CounterRng(PRETRAINED_SEED)
        self.cfg = cfg
        self.dtype = dtype
        ch = cfg.channel_schedule
        levels = cfg.levels
        self.time_mlp = TimeMlp(cfg.time_dim, rng, dtype=dtype)
        self.conv_in = conv2d_layer(cfg.latent_channels, ch[0], 3, rng, dtype=dtype)
        self.down_stages = []
        self.down_convs = []
        for k in range(levels):
            in_ch = ch[k - 1] if k else ch[0]
            self.down_stages.append(_Stage(in_ch, ch[k], cfg.blocks_per_level, cfg.time_dim,
                                           cfg.text_dim, k in cfg.attention_levels, rng,
                                           dtype=dtype))
            if k < levels - 1:
                self.down_convs.append(ConvNd(2, ch[k], ch[k], 3, rng, stride=2, pad=1,
                                              dtype=dtype))
        top = ch[-1]
        self.mid_block1 = ResBlock(2, top, top, cfg.time_dim, rng, dtype=dtype)
        self.mid_attn = TransformerBlock2d(top, cfg.text_dim, rng, dtype=dtype)
        self.mid_block2 = ResBlock(2, top, top, cfg.time_dim, rng, dtype=dtype)
        self.up_stages = []
        self.up_convs = []
        cur = top
        for k in range(levels - 1, -1, -1):
            self.up_stages.append(_Stage(cur + ch[k], ch[k], cfg.blocks_per_level,
                                         cfg.time_dim, cfg.text_dim,
                                         k in cfg.attention_levels, rng, dtype=dtype))
            cur = ch[k]
            if k > 0:
                self.up_convs.append(ConvNd(2, cur, cur, 3, rng, dtype=dtype))
        # Plain conv head keeps the output linear in the last fused stage;
        # the gain gives the trainable fusion path enough output leverage to
        # make one-video fine-tuning effective at the fixed learning rate.
        self.conv_out = conv2d_layer(ch[0], cfg.latent_channels, 3, rng, scale=2.0,
                                     dtype=dtype)

    def stage_ids(self) -> list[str]:
        levels = self.cfg.levels
        return ([f"down{k}" for k in range(levels)] + ["mid"]
                + [f"up{k}" for k in range(levels - 1, -1, -1)])

    def _context(self, prompt) -> Tensor:
        if isinstance(prompt, PromptEmbedding):
            ctx = Tensor(prompt.tokens.astype(self.dtype))
        elif isinstance(prompt, Tensor):
            ctx = prompt.astype(self.dtype)
        else:
            raise TypeError(f"prompt must be a PromptEmbedding or Tensor, got {type(prompt)}")
        if ctx.shape[-1] != self.cfg.text_dim:
            raise ValueError(
                f"prompt token dim {ctx.shape[-1]} != configured text_dim {self.cfg.text_dim}")
        return ctx

    def _check_extents(self, h: int, w: int) -> None:
        div = 2 ** (self.cfg.levels - 1)
        if h % div or w % div:
            raise ValueError(
                f"spatial extents {h}x{w} must be divisible by {div} "
                f"for {self.cfg.levels} levels")

    def forward(self, frames: Tensor, t: int, prompt,
                injected: StageHook | None = None) -> tuple[Tensor, list[tuple[str, Tensor]]]:
        """Denoise folded frames; returns (noise estimate, per-stage features).

        ``injected[stage_id]`` replaces that stage's feature (a tensor, or a
        callable applied to the computed feature) before the next stage and
        the skip connection consume it.
        """
        if frames.ndim != 4:
            raise ValueError(f"spatial forward expects rank 4, got rank {frames.ndim}")
        self._check_extents(frames.shape[2], frames.shape[3])
        context = self._context(prompt)
        t_emb = self.time_mlp(t)
        features: list[tuple[str, Tensor]] = []

        def tap(stage_id: str, h: Tensor) -> Tensor:
            if injected is not None and stage_id in injected:
                fused = injected[stage_id]
                h = fused(h) if callable(fused) else fused
            features.append((stage_id, h))
            return h

        levels = self.cfg.levels
        h = self.conv_in(frames)
        skips = []
        for k in range(levels):
            h = self.down_stages[k](h, t_emb, context)
            h = tap(f"down{k}", h)
            skips.append(h)
            if k < levels - 1:
                h = self.down_convs[k](h)
        h = self.mid_block1(h, t_emb)
        h = self.mid_attn(h, context)
        h = self.mid_block2(h, t_emb)
        h = tap("mid", h)
        for i, k in enumerate(range(levels - 1, -1, -1)):
            h = concat([h, skips.pop()], axis=1)
            h = self.up_stages[i](h, t_emb, context)
            h = tap(f"up{k}", h)
            if k > 0:
                h = ops.upsample_nearest(h, (2, 3))
                h = self.up_convs[i](h)
        eps = self.conv_out(h)
        return eps, features

    def __call__(self, frames: Tensor, t: int, prompt,
                 injected: StageHook | None = None):
        return self.forward(frames, t, prompt, injected)
