"""Noise schedule, forward diffusion, the denoising objective, and the
deterministic DDIM sampling/inversion recursions with classifier-free
guidance.

All functions are pure over immutable inputs. The sampling loops detach
intermediate latents, so they never build gradient graphs; the training
objective keeps the graph through the noise predictor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import CounterRng
from .tensor import Tensor

BETA_START = 1e-4
BETA_END = 2e-2

# model(z_t, t, prompt_embedding) -> noise estimate shaped like z_t
NoisePredictor = Callable[[Tensor, int, object], Tensor]


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal coefficients plus the retained timestep subsequence.

    ``alpha_bar[t]`` is the product of (1 - beta[s]) for s <= t; it decreases
    strictly from near 1 toward 0. ``ddim_steps`` is a strictly increasing
    subsequence of [0, T-1] used by the deterministic sampler.
    """

    total_steps: int
    beta: np.ndarray
    alpha_bar: np.ndarray
    ddim_steps: tuple[int, ...]


def make_schedule(total_steps: int, sample_steps: int) -> NoiseSchedule:
    """Linear beta schedule with a uniformly spaced retained subsequence.

    ``sample_steps`` indices cover [0, total_steps-1] including both
    endpoints (a single step degenerates to the maximal-noise index).
    """
    if total_steps < 1:
        raise ValueError(f"make_schedule: total_steps must be >= 1, got {total_steps}")
    if not 1 <= sample_steps <= total_steps:
        raise ValueError(
            f"make_schedule: sample_steps must be in [1, {total_steps}], got {sample_steps}")
    beta = np.linspace(BETA_START, BETA_END, total_steps, dtype=np.float64)
    alpha_bar = np.cumprod(1.0 - beta)
    if sample_steps == 1:
        steps = (total_steps - 1,)
    else:
        steps = tuple(int(round(v)) for v in
                      np.linspace(0, total_steps - 1, sample_steps))
    return NoiseSchedule(total_steps, beta, alpha_bar, steps)


@dataclass(frozen=True)
class GuidanceConfig:
    """Classifier-free guidance: scale 1 disables (conditional passthrough)."""

    scale: float = 1.0
    unconditional: object = None  # PromptEmbedding for the empty prompt

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError(f"guidance scale must be >= 0, got {self.scale}")


def q_sample(z0: Tensor, t: int, eps: Tensor, sched: NoiseSchedule) -> Tensor:
    """Diffuse a clean latent to level t: sqrt(a)z0 + sqrt(1-a)eps."""
    if not 0 <= t < sched.total_steps:
        raise ValueError(f"q_sample: timestep {t} outside [0, {sched.total_steps})")
    if eps.shape != z0.shape:
        raise ValueError(f"q_sample: noise shape {eps.shape} != latent shape {z0.shape}")
    a = float(sched.alpha_bar[t])
    return z0 * float(np.sqrt(a)) + eps * float(np.sqrt(1.0 - a))


def ldm_loss(model: NoisePredictor, z0: Tensor, prompt, rng: CounterRng,
             sched: NoiseSchedule) -> Tensor:
    """Single-sample denoising objective: ||eps - eps_theta(z_t, t, p)||^2 / n.

    Draws the timestep uniformly over all levels and the noise from the unit
    Gaussian; differentiable through the model.
    """
    t = rng.randint(0, sched.total_steps)
    eps = Tensor(rng.normal(z0.shape, dtype=z0.dtype))
    z_t = q_sample(z0.detach(), t, eps, sched)
    pred = model(z_t, t, prompt)
    if pred.shape != z0.shape:
        raise ValueError(
            f"ldm_loss: model output shape {pred.shape} != latent shape {z0.shape}")
    diff = eps - pred
    return (diff * diff).mean()


def _check_coeffs(name: str, abar_t: float, abar_prev: float) -> None:
    if not (0.0 < abar_t <= 1.0 and 0.0 < abar_prev <= 1.0):
        raise ValueError(
            f"{name}: signal coefficients must lie in (0, 1], got {abar_t} and {abar_prev}")


def ddim_step(z_t: Tensor, eps: Tensor, abar_t: float, abar_prev: float) -> Tensor:
    """One deterministic denoising step from signal level abar_t to abar_prev."""
    _check_coeffs("ddim_step", abar_t, abar_prev)
    if abar_prev == abar_t:
        return z_t
    x0 = (z_t - eps * float(np.sqrt(1.0 - abar_t))) * float(1.0 / np.sqrt(abar_t))
    return x0 * float(np.sqrt(abar_prev)) + eps * float(np.sqrt(1.0 - abar_prev))


def ddim_invert_step(z_prev: Tensor, eps: Tensor, abar_prev: float, abar_t: float) -> Tensor:
    """One inversion step from signal level abar_prev up to abar_t (mirror of
    :func:`ddim_step` with the same fixed noise estimate)."""
    _check_coeffs("ddim_invert_step", abar_t, abar_prev)
    if abar_prev == abar_t:
        return z_prev
    x0 = (z_prev - eps * float(np.sqrt(1.0 - abar_prev))) * float(1.0 / np.sqrt(abar_prev))
    return x0 * float(np.sqrt(abar_t)) + eps * float(np.sqrt(1.0 - abar_t))


def guided_eps(eps_cond: Tensor, eps_uncond: Tensor, scale: float) -> Tensor:
    """Classifier-free combination; exact passthrough at scale 0 and 1."""
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError(
            f"guided_eps: shape mismatch {eps_cond.shape} vs {eps_uncond.shape}")
    if scale == 1.0:
        return eps_cond
    if scale == 0.0:
        return eps_uncond
    return eps_uncond + (eps_cond - eps_uncond) * float(scale)


def _predict(model: NoisePredictor, z: Tensor, t: int, prompt,
             guidance: GuidanceConfig | None) -> Tensor:
    eps = model(z, t, prompt).detach()
    if guidance is None or guidance.scale == 1.0:
        return eps
    eps_uncond = model(z, t, guidance.unconditional).detach()
    return guided_eps(eps, eps_uncond, guidance.scale)


def ddim_sample(z_start: Tensor, model: NoisePredictor, prompt,
                guidance: GuidanceConfig, sched: NoiseSchedule) -> Tensor:
    """Run the denoising recursion over the retained steps, ending clean.

    The chain visits alpha_bar[steps[-1]] -> ... -> alpha_bar[steps[0]] -> 1;
    each hop queries the model at the current latent and its timestep, with
    two queries per hop under guidance.
    """
    steps = sched.ddim_steps
    z = z_start.detach()
    for i in range(len(steps) - 1, -1, -1):
        t = steps[i]
        abar_t = float(sched.alpha_bar[t])
        abar_prev = float(sched.alpha_bar[steps[i - 1]]) if i > 0 else 1.0
        eps = _predict(model, z, t, prompt, guidance)
        z = ddim_step(z, eps, abar_t, abar_prev).detach()
    return z


def ddim_invert(z0: Tensor, model: NoisePredictor, prompt,
                sched: NoiseSchedule, refine_steps: int = 3) -> Tensor:
    """Run the inversion recursion from clean to the deepest retained level.

    Mirror of :func:`ddim_sample` at guidance scale 1: the chain visits
    1 -> alpha_bar[steps[0]] -> ... -> alpha_bar[steps[-1]]. Each hop first
    queries the model at the current latent and the hop's target timestep,
    then re-evaluates ``refine_steps`` times at the running estimate of the
    hop's output (fixed-point refinement). The refinement makes each hop the
    near-exact algebraic inverse of the corresponding sampling hop, so the
    reconstruction error of sample(invert(z)) stays small even for rough
    noise predictors; ``refine_steps=0`` is the plain first-order scheme.
    """
    if refine_steps < 0:
        raise ValueError(f"refine_steps must be >= 0, got {refine_steps}")
    steps = sched.ddim_steps
    z = z0.detach()
    for i in range(len(steps)):
        t = steps[i]
        abar_t = float(sched.alpha_bar[t])
        abar_prev = float(sched.alpha_bar[steps[i - 1]]) if i > 0 else 1.0
        guess = z
        for _ in range(refine_steps + 1):
            eps = _predict(model, guess, t, prompt, None)
            guess = ddim_invert_step(z, eps, abar_prev, abar_t).detach()
        z = guess
    return z
