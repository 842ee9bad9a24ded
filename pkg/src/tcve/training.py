"""One-video fine-tuning: optimize the temporal Unet and fusion units with
the denoising objective while the spatial Unet stays frozen.

The optimizer only ever touches the trainable partition; the frozen set is
verified bitwise-unchanged by the test suite. Each iteration draws a fresh
(timestep, noise) pair from the deterministic stream, so identical seeds give
identical loss traces and final parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, TrainConfig
from .diffusion import NoiseSchedule, ldm_loss, make_schedule
from .model import ModelParams, VideoDenoiser, build_model
from .rng import CounterRng
from .stubs import PixelVideo, encode_text, encode_video
from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment accumulators per trainable tensor."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: ModelParams, state: AdamState, cfg: TrainConfig) -> None:
    """Bias-corrected Adam update over the trainable partition, in place.

    Every trainable tensor must carry a gradient; frozen tensors are never
    touched.
    """
    missing = [n for n in params.trainable if params.tensors[n].grad is None]
    if missing:
        raise ValueError(f"adam_step: missing gradient for trainable tensor {missing[0]}")
    state.step += 1
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for name in params.trainable:
        tensor = params.tensors[name]
        g = tensor.grad.astype(np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name] = m
        state.v[name] = v
        update = (cfg.learning_rate * (m / correction1)
                  / (np.sqrt(v / correction2) + eps))
        tensor.data = (tensor.data.astype(np.float64) - update).astype(tensor.dtype)


@dataclass
class TrainResult:
    model: VideoDenoiser
    params: ModelParams
    losses: list[float]
    schedule: NoiseSchedule


def check_video_extents(video: PixelVideo, cfg: RunConfig) -> None:
    """Surface every divisibility requirement before the first step."""
    f, _, h, w = video.frames.shape
    problems = []
    if h % 2 or w % 2:
        problems.append(f"pixel extents {h}x{w} must be even for the codec")
    lh, lw = h // 2, w // 2
    div = 2 ** (cfg.spatial.levels - 1)
    if lh % div or lw % div:
        problems.append(
            f"latent extents {lh}x{lw} must be divisible by {div} "
            f"(pixel extents divisible by {2 * div})")
    fdiv = 2 ** (cfg.temporal.levels - 1)
    if cfg.train.ablation.temporal_unet and f % fdiv:
        problems.append(f"frame count {f} must be divisible by {fdiv}")
    if problems:
        raise ValueError("; ".join(problems))


def train_on_video(video: PixelVideo, source_prompt: str, cfg: RunConfig,
                   model: VideoDenoiser | None = None) -> TrainResult:
    """Fit the trainable partition to one text-video pair.

    Runs ``cfg.train.iterations`` steps of: diffuse the encoded video to a
    random level, predict the noise with the joint denoiser, backpropagate,
    Adam-update the trainable set. Returns the full loss trace.
    """
    check_video_extents(video, cfg)
    if model is None:
        model = build_model(cfg)
    params = model.param_view()
    sched = make_schedule(cfg.schedule.total_steps, cfg.schedule.sample_steps)
    z0 = Tensor(encode_video(video).astype(model.dtype))
    prompt = encode_text(source_prompt)
    rng = CounterRng(cfg.train.seed).derive("train")
    state = AdamState()
    losses: list[float] = []
    for _ in range(cfg.train.iterations):
        model.zero_grad()
        loss = ldm_loss(model, z0, prompt, rng, sched)
        loss.backward()
        losses.append(loss.item())
        if params.trainable:
            adam_step(params, state, cfg.train)
    return TrainResult(model, params, losses, sched)
