"""Temporal-consistent video editing with a from-scratch latent diffusion
stack: a frozen per-frame spatial Unet, a trainable temporal Unet over the
frame axis, and spatial-temporal fusion units bridging them. One-video
fine-tuning, DDIM inversion-based zero-shot editing, and desk-scale metrics.
"""

from .config import (AblationConfig, RunConfig, ScheduleConfig,
                     SpatialUnetConfig, StuConfig, TemporalUnetConfig,
                     TrainConfig, load_config, toy_config)
from .diffusion import (GuidanceConfig, NoiseSchedule, ddim_invert,
                        ddim_invert_step, ddim_sample, ddim_step, guided_eps,
                        ldm_loss, make_schedule, q_sample)
from .metrics import frame_consistency, textual_alignment
from .model import ModelParams, VideoDenoiser, build_model
from .pipeline import EditRequest, ReconstructionReport, edit_video, reconstruct_video
from .rng import CounterRng
from .stubs import (PixelVideo, PromptEmbedding, decode_video, embed_frame,
                    encode_text, encode_video, unconditional_embedding)
from .synth import make_toy_video
from .tensor import Tensor
from .training import AdamState, TrainResult, adam_step, train_on_video

__version__ = "0.1.0"

__all__ = [
    "AblationConfig", "AdamState", "CounterRng", "EditRequest",
    "GuidanceConfig", "ModelParams", "NoiseSchedule", "PixelVideo",
    "PromptEmbedding", "ReconstructionReport", "RunConfig", "ScheduleConfig",
    "SpatialUnetConfig", "StuConfig", "TemporalUnetConfig", "Tensor",
    "TrainConfig", "TrainResult", "VideoDenoiser", "adam_step", "build_model",
    "ddim_invert", "ddim_invert_step", "ddim_sample", "ddim_step",
    "decode_video", "edit_video", "embed_frame", "encode_text", "encode_video",
    "frame_consistency", "guided_eps", "ldm_loss", "load_config",
    "make_schedule", "make_toy_video", "q_sample", "reconstruct_video",
    "textual_alignment", "toy_config", "train_on_video",
    "unconditional_embedding",
]
