"""The joint video denoiser: frozen spatial Unet, trainable temporal Unet,
and one fusion unit per shared stage.

Each call folds the latent video two ways, runs the temporal Unet once, and
threads the temporal stage features into the spatial forward pass through
stage hooks, so every fusion sees the spatial feature that the previous
fusions already shaped. Parameters are partitioned by name prefix:
``spatial.*`` is frozen, everything else is trainable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .rng import CounterRng
from .spatial import PRETRAINED_SEED, SpatialUnet, fold_frames, unfold_frames
from .stu import SpatialTemporalUnit
from .stubs import PromptEmbedding
from .temporal import TemporalUnet, fold_space
from .tensor import Tensor

FROZEN_PREFIX = "spatial."


@dataclass(frozen=True)
class ModelParams:
    """Named, ordered parameter map with the frozen/trainable partition."""

    tensors: dict[str, Tensor]
    frozen: tuple[str, ...]
    trainable: tuple[str, ...]

    def __post_init__(self):
        both = set(self.frozen) & set(self.trainable)
        union = set(self.frozen) | set(self.trainable)
        if both or union != set(self.tensors):
            raise ValueError("partition must cover every parameter exactly once")


class VideoDenoiser:
    """Noise predictor over (b, c, f, h, w) latents."""

    def __init__(self, cfg: RunConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.ablation = cfg.train.ablation
        # the frozen backbone always comes from its own fixed seed
        self.spatial = SpatialUnet(cfg.spatial, CounterRng(PRETRAINED_SEED), dtype=dtype)
        self.temporal: TemporalUnet | None = None
        self.stus: dict[str, SpatialTemporalUnit] = {}
        if self.ablation.temporal_unet:
            rng = CounterRng(seed)
            self.temporal = TemporalUnet(cfg.temporal, cfg.spatial.latent_channels,
                                         rng.derive("temporal"), dtype=dtype,
                                         include_up_path=cfg.stu.fuse_up_stages)
            stu_rng = rng.derive("stu")
            spatial_channels = self._spatial_stage_channels()
            for sid in self._fused_stage_ids():
                self.stus[sid] = SpatialTemporalUnit(
                    sid, self.temporal.stage_channels(sid), spatial_channels[sid],
                    cfg.stu, self.ablation, stu_rng.derive(sid), dtype=dtype)

    def _spatial_stage_channels(self) -> dict[str, int]:
        ch = self.cfg.spatial.channel_schedule
        out = {}
        for sid in self.spatial.stage_ids():
            out[sid] = ch[-1] if sid == "mid" else ch[int(sid.lstrip("downup"))]
        return out

    def _fused_stage_ids(self) -> list[str]:
        assert self.temporal is not None
        spatial_ids = set(self.spatial.stage_ids())
        ids = [sid for sid in self.temporal.stage_ids() if sid in spatial_ids]
        if not self.cfg.stu.fuse_up_stages:
            ids = [sid for sid in ids if not sid.startswith("up")]
        return ids

    # ------------------------------------------------------------------

    def denoise(self, z: Tensor, t: int, prompt: PromptEmbedding | Tensor) -> Tensor:
        """Noise estimate shaped like the input latent video."""
        if z.ndim != 5:
            raise ValueError(f"denoise: latent must have rank 5, got rank {z.ndim}")
        b, c, f, h, w = z.shape
        frames = fold_frames(z)
        injected = None
        if self.temporal is not None:
            tem_stages = dict(self.temporal.forward(fold_space(z), t))
            dims = (b, f, h, w)

            def make_hook(sid: str):
                unit = self.stus[sid]
                return lambda x_spa: unit(x_spa, tem_stages[sid], dims,
                                          spa_stage=sid, tem_stage=sid)

            injected = {sid: make_hook(sid) for sid in self.stus}
        eps_frames, _ = self.spatial.forward(frames, t, prompt, injected=injected)
        return unfold_frames(eps_frames, b)

    def __call__(self, z: Tensor, t: int, prompt) -> Tensor:
        return self.denoise(z, t, prompt)

    def spatial_only(self, z: Tensor, t: int, prompt) -> Tensor:
        """The per-frame denoiser with all temporal machinery bypassed."""
        b = z.shape[0]
        eps_frames, _ = self.spatial.forward(fold_frames(z), t, prompt)
        return unfold_frames(eps_frames, b)

    # ------------------------------------------------------------------

    def named_params(self):
        yield from self.spatial.named_params("spatial")
        if self.temporal is not None:
            yield from self.temporal.named_params("temporal")
        for sid, unit in self.stus.items():
            yield from unit.named_params(f"stu.{sid}")

    def param_view(self) -> ModelParams:
        tensors = dict(self.named_params())
        frozen = tuple(n for n in tensors if n.startswith(FROZEN_PREFIX))
        trainable = tuple(n for n in tensors if not n.startswith(FROZEN_PREFIX))
        return ModelParams(tensors, frozen, trainable)

    def zero_grad(self) -> None:
        for _, t in self.named_params():
            t.grad = None

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        """Overwrite parameters by name; tolerant of missing ablated tensors."""
        tensors = dict(self.named_params())
        for name, tensor in tensors.items():
            if name not in state:
                raise ValueError(f"checkpoint is missing parameter {name}")
            arr = state[name]
            if tuple(arr.shape) != tensor.shape:
                raise ValueError(
                    f"checkpoint tensor {name} has shape {tuple(arr.shape)}, "
                    f"model expects {tensor.shape}")
            tensor.data = np.ascontiguousarray(arr.astype(tensor.dtype, copy=False))

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.named_params()}


def build_model(cfg: RunConfig, seed: int | None = None, dtype=np.float32) -> VideoDenoiser:
    return VideoDenoiser(cfg, seed=cfg.train.seed if seed is None else seed, dtype=dtype)
