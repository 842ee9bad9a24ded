"""Zero-shot editing inference: encode the source video, invert it to noise
under the source prompt, re-denoise under the edited prompt with
classifier-free guidance, decode.

Inversion always runs at guidance scale 1; guidance applies only to the
sampling leg. Each call recomputes the inversion (stateless).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ScheduleConfig
from .diffusion import GuidanceConfig, ddim_invert, ddim_sample, make_schedule
from .model import VideoDenoiser
from .stubs import (PixelVideo, decode_video, encode_text, encode_video,
                    unconditional_embedding)
from .tensor import Tensor


@dataclass(frozen=True)
class EditRequest:
    source_video: PixelVideo
    source_prompt: str
    edited_prompt: str
    guidance_scale: float = 12.5
    ddim_steps: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.guidance_scale < 0:
            raise ValueError(f"guidance_scale must be >= 0, got {self.guidance_scale}")
        if self.ddim_steps < 1:
            raise ValueError(f"ddim_steps must be >= 1, got {self.ddim_steps}")


@dataclass(frozen=True)
class ReconstructionReport:
    latent_l2_rel: float
    pixel_mae: float
    steps: int


def _latent(video: PixelVideo, model: VideoDenoiser) -> Tensor:
    return Tensor(encode_video(video).astype(model.dtype))


def edit_video(req: EditRequest, model: VideoDenoiser,
               schedule: ScheduleConfig = ScheduleConfig()) -> PixelVideo:
    """Deterministic prompt-guided edit of the source video.

    The output has the source's frame count and extents. The edited prompt
    must be nonempty (an unconditional edit has no target).
    """
    if not req.edited_prompt.strip():
        raise ValueError("edited_prompt must be nonempty")
    sched = make_schedule(schedule.total_steps, req.ddim_steps)
    z0 = _latent(req.source_video, model)
    inverted = ddim_invert(z0, model, encode_text(req.source_prompt), sched,
                           refine_steps=schedule.invert_refine)
    guidance = GuidanceConfig(req.guidance_scale, unconditional_embedding())
    edited = ddim_sample(inverted, model, encode_text(req.edited_prompt), guidance, sched)
    return decode_video(edited.data.astype(np.float64))


def reconstruct_video(video: PixelVideo, prompt: str, model: VideoDenoiser,
                      steps: int = 50,
                      schedule: ScheduleConfig = ScheduleConfig()
                      ) -> tuple[PixelVideo, ReconstructionReport]:
    """Invert then re-sample under one prompt at guidance 1.

    Reports the relative latent L2 error and the per-pixel mean absolute
    error against the source.
    """
    sched = make_schedule(schedule.total_steps, steps)
    z0 = _latent(video, model)
    p = encode_text(prompt)
    inverted = ddim_invert(z0, model, p, sched, refine_steps=schedule.invert_refine)
    recon = ddim_sample(inverted, model, p, GuidanceConfig(1.0), sched)
    denom = float(np.linalg.norm(z0.data))
    latent_err = float(np.linalg.norm(recon.data - z0.data)) / max(denom, 1e-12)
    pixels = decode_video(recon.data.astype(np.float64))
    mae = float(np.abs(pixels.frames.astype(np.float64)
                       - video.frames.astype(np.float64)).mean())
    return pixels, ReconstructionReport(latent_err, mae, steps)
