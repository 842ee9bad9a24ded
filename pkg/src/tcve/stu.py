"""Spatial-temporal fusion unit bridging the two Unets at one stage.

The temporal feature is aligned to the spatial feature's shape (trilinear
resize plus a learned pointwise channel projection), sharpened by temporal
attention at each spatial location, blended into the spatial feature with a
fixed balance factor, and mixed by a 3D convolution.

Initialization is identity-preserving: the attention value projection starts
at zero and the 3D convolution starts as a Dirac kernel, so a fresh unit
passes the spatial feature through unchanged.
"""

from __future__ import annotations

import numpy as np

from .config import AblationConfig, StuConfig
from .layers import ConvNd, Module, conv3d_layer
from .rng import CounterRng
from .spatial import fold_frames, unfold_frames
from .temporal import unfold_space
from .tensor import Tensor, matmul, softmax
from .ops import resize_trilinear


def temporal_attention(x: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor) -> Tensor:
    """Single-head attention over frames, independently per spatial location.

    For each (b, h, w) the f frame vectors attend to each other:
    softmax(QKᵀ/sqrt(d))V with Q, K, V channel projections of the input.
    No positional term, so the map is frame-permutation equivariant.
    """
    if x.ndim != 5:
        raise ValueError(f"temporal_attention: expected rank 5, got rank {x.ndim}")
    b, c, f, h, w = x.shape
    for name, mat in (("w_q", w_q), ("w_k", w_k), ("w_v", w_v)):
        if mat.shape != (c, c):
            raise ValueError(
                f"temporal_attention: {name} must be square ({c}, {c}), got {mat.shape}")
    tokens = x.permute(0, 3, 4, 2, 1).reshape(b * h * w, f, c)
    q = matmul(tokens, w_q.transpose_last())
    k = matmul(tokens, w_k.transpose_last())
    v = matmul(tokens, w_v.transpose_last())
    scores = matmul(q, k.transpose_last()) * float(1.0 / np.sqrt(c))
    out = matmul(softmax(scores, axis=-1), v)
    return out.reshape(b, h, w, f, c).permute(0, 4, 3, 1, 2)


class SpatialTemporalUnit(Module):
    """One fusion unit, owning the parameters for a single stage."""

    def __init__(self, stage_id: str, temporal_channels: int, spatial_channels: int,
                 cfg: StuConfig, ablation: AblationConfig, rng: CounterRng,
                 dtype=np.float32):
        self.stage_id = stage_id
        self.balance = cfg.balance
        self.ablation = ablation
        # channel alignment is always needed: interpolation cannot change c
        self.proj = ConvNd(3, temporal_channels, spatial_channels, 1, rng, dtype=dtype)
        if ablation.stu and ablation.temporal_attention:
            c = spatial_channels
            scale = 1.0 / np.sqrt(c)
            self.w_q = Tensor(rng.normal((c, c), dtype=np.float64) * scale,
                              requires_grad=True, dtype=dtype)
            self.w_k = Tensor(rng.normal((c, c), dtype=np.float64) * scale,
                              requires_grad=True, dtype=dtype)
            self.w_v = Tensor(np.zeros((c, c)), requires_grad=True, dtype=dtype)
        if ablation.stu and ablation.conv3d:
            self.fuse_conv = conv3d_layer(spatial_channels, spatial_channels, 3, rng,
                                          dtype=dtype).make_dirac()

    def align(self, x_tem: Tensor, target_shape: tuple[int, ...],
              video_hw: tuple[int, int]) -> Tensor:
        """Resize a folded temporal stage feature to a spatial stage's shape.

        (b*h*w, c_t, f_k) -> (b, c_k, f, h_k, w_k): unfold the spatial
        positions, trilinear-resize (f_k, h, w) to (f, h_k, w_k), then apply
        the pointwise channel projection.
        """
        b, c_k, f, h_k, w_k = target_shape
        h, w = video_hw
        if x_tem.shape[0] != b * h * w:
            raise ValueError(
                f"align: folded batch {x_tem.shape[0]} incompatible with "
                f"batch*height*width = {b * h * w}")
        grid = unfold_space(x_tem, b, h, w)
        resized = resize_trilinear(grid, (f, h_k, w_k))
        return self.proj(resized)

    def __call__(self, x_spa_folded: Tensor, x_tem: Tensor,
                 video_dims: tuple[int, int, int, int],
                 spa_stage: str | None = None, tem_stage: str | None = None) -> Tensor:
        """Fuse one spatial stage with its temporal counterpart.

        Returns a tensor shaped exactly like ``x_spa_folded``. Ablations:
        no attention uses the aligned feature directly; no 3D convolution
        returns the weighted blend; a disabled unit degenerates to a plain
        elementwise sum of the spatial and aligned temporal features.
        """
        for label, got in (("spatial", spa_stage), ("temporal", tem_stage)):
            if got is not None and got != self.stage_id:
                raise ValueError(
                    f"stage mismatch: {label} feature {got!r} fed to unit "
                    f"{self.stage_id!r}")
        b, f, h, w = video_dims
        bf, c_k, h_k, w_k = x_spa_folded.shape
        x_spa = unfold_frames(x_spa_folded, b)
        aligned = self.align(x_tem, (b, c_k, f, h_k, w_k), (h, w))
        if not self.ablation.stu:
            return fold_frames(x_spa + aligned)
        if self.ablation.temporal_attention:
            branch = temporal_attention(aligned, self.w_q, self.w_k, self.w_v)
        else:
            branch = aligned
        fused = x_spa + branch * self.balance
        if self.ablation.conv3d:
            fused = self.fuse_conv(fused)
        return fold_frames(fused)
