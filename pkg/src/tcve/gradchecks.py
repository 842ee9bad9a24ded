"""Finite-difference verification suites, runnable from the CLI.

Each suite rebuilds small float64 problems, backpropagates, and compares
against central finite differences. Suites cover every differentiable
operator plus a two-level joint-denoiser composite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .config import (RunConfig, ScheduleConfig, SpatialUnetConfig,
                     TemporalUnetConfig)
from .diffusion import ldm_loss, make_schedule
from .model import build_model
from .rng import CounterRng
from .tensor import Tensor, check_gradients, concat, matmul, sigmoid, softmax

OP_TOL = 1e-5
COMPOSITE_TOL = 1e-4


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def _rand(rng: CounterRng, shape) -> Tensor:
    return Tensor(rng.normal(shape, dtype=np.float64), requires_grad=True)


def _const(rng: CounterRng, shape) -> Tensor:
    return Tensor(rng.normal(shape, dtype=np.float64))


def suite_tensor_core() -> list[CheckResult]:
    rng = CounterRng(101)
    results = []

    def add(name, make_loss, params, tol=OP_TOL):
        results.append(CheckResult("tensor-core", name, check_gradients(make_loss, params), tol))

    x1 = _rand(rng, (2, 2, 8))
    w1 = _rand(rng, (3, 2, 3))
    b1 = _rand(rng, (3,))
    v1 = _const(rng, (2, 3, 4))
    add("conv1d", lambda: (ops.conv1d(x1, w1, b1, stride=2, pad=1) * v1).sum(), [x1, w1, b1])

    x2 = _rand(rng, (1, 2, 6, 6))
    w2 = _rand(rng, (2, 2, 3, 3))
    b2 = _rand(rng, (2,))
    v2 = _const(rng, (1, 2, 6, 6))
    add("conv2d", lambda: (ops.conv2d(x2, w2, b2, pad=1) * v2).sum(), [x2, w2, b2])

    x3 = _rand(rng, (1, 2, 3, 3, 3))
    w3 = _rand(rng, (2, 2, 3, 3, 3))
    b3 = _rand(rng, (2,))
    v3 = _const(rng, (1, 2, 3, 3, 3))
    add("conv3d", lambda: (ops.conv3d(x3, w3, b3, pad=1) * v3).sum(), [x3, w3, b3])

    a = _rand(rng, (2, 3, 4))
    b = _rand(rng, (4, 5))
    vm = _const(rng, (2, 3, 5))
    add("matmul", lambda: (matmul(a, b) * vm).sum(), [a, b])

    xs = _rand(rng, (3, 6))
    vs = _const(rng, (3, 6))
    add("softmax", lambda: (softmax(xs, axis=1) * vs).sum(), [xs])

    xg = _rand(rng, (2, 4, 5))
    gg = _rand(rng, (4,))
    bg = _rand(rng, (4,))
    vg = _const(rng, (2, 4, 5))
    add("group_norm", lambda: (ops.group_norm(xg, 2, gg, bg) * vg).sum(), [xg, gg, bg])

    xl = _rand(rng, (3, 4))
    wl = _rand(rng, (2, 4))
    bl = _rand(rng, (2,))
    vl = _const(rng, (3, 2))
    add("linear", lambda: (ops.linear(xl, wl, bl) * vl).sum(), [xl, wl, bl])

    xsi = _rand(rng, (4, 4))
    add("silu", lambda: (ops.silu(xsi) * ops.silu(xsi)).sum(), [xsi])
    add("sigmoid", lambda: (sigmoid(xsi) * sigmoid(xsi)).sum(), [xsi])

    xr = _rand(rng, (1, 2, 3, 4, 4))
    vr = _const(rng, (1, 2, 4, 3, 6))
    add("resize_trilinear", lambda: (ops.resize_trilinear(xr, (4, 3, 6)) * vr).sum(), [xr])

    xu = _rand(rng, (2, 2, 3))
    vu = _const(rng, (2, 2, 6))
    add("upsample_nearest", lambda: (ops.upsample_nearest(xu, (2,)) * vu).sum(), [xu])

    xp = _rand(rng, (2, 3, 4))
    vp = _const(rng, (4, 2, 3))
    add("permute", lambda: (xp.permute(2, 0, 1) * vp).sum(), [xp])
    vq = _const(rng, (3, 8))
    add("reshape", lambda: (xp.reshape(3, 8) * vq).sum(), [xp])

    xc1 = _rand(rng, (2, 3))
    xc2 = _rand(rng, (2, 2))
    vc = _const(rng, (2, 5))
    add("concat", lambda: (concat([xc1, xc2], axis=1) * vc).sum(), [xc1, xc2])
    return results


def suite_diffusion() -> list[CheckResult]:
    rng = CounterRng(202)
    sched = make_schedule(30, 5)
    w = _rand(rng, (3, 3))
    z0 = _const(rng, (2, 3))

    def make_loss():
        draw = CounterRng(55)
        return ldm_loss(lambda z, t, p: matmul(z, w), z0, None, draw, sched)

    err = check_gradients(make_loss, [w])
    return [CheckResult("diffusion-core", "ldm_loss_through_model", err, COMPOSITE_TOL)]


_COMPOSITE_CFG = RunConfig(
    spatial=SpatialUnetConfig(latent_channels=2, channel_schedule=(3, 4),
                              blocks_per_level=1, attention_levels=(1,),
                              text_dim=4, time_dim=4),
    temporal=TemporalUnetConfig(base_channels=2, levels=2, time_dim=4),
    schedule=ScheduleConfig(total_steps=20, sample_steps=5),
)


def _composite_model():
    model = build_model(_COMPOSITE_CFG, seed=7, dtype=np.float64)
    # move the fusion units off their identity initialization so every
    # parameter has a generic gradient
    shake = CounterRng(303)
    for name, t in model.named_params():
        if name.startswith("stu."):
            t.data = t.data + shake.normal(t.shape, dtype=np.float64) * 0.2
    return model


def suite_composite() -> list[CheckResult]:
    model = _composite_model()
    rng = CounterRng(404)
    z = _const(rng, (1, 2, 2, 4, 4))
    v = _const(rng, (1, 2, 2, 4, 4))
    prompt = _const(rng, (3, 4))

    def make_loss():
        return (model(z, 3, prompt) * v).sum()

    params = dict(model.named_params())
    subset = [
        "spatial.conv_in.w",
        "spatial.down_stages0.blocks0.conv1.w",
        "spatial.mid_attn.self_attn.to_q.w",
        "spatial.mid_attn.cross_attn.to_v.w",
        "spatial.time_mlp.fc1.w",
        "spatial.conv_out.b",
        "spatial.up_stages1.blocks0.norm2.gain",
        "temporal.conv_in.w",
        "temporal.downs0.blocks0.conv1.w",
        "temporal.downs0.pool.w",
        "temporal.ups0.up.w",
        "temporal.time_mlp.fc2.b",
        "stu.down0.w_q",
        "stu.mid.w_v",
        "stu.mid.fuse_conv.w",
        "stu.up0.proj.w",
    ]
    results = []
    for name in subset:
        err = check_gradients(make_loss, [params[name]])
        results.append(CheckResult("composite", name, err, COMPOSITE_TOL))
    return results


SUITES = {
    "tensor-core": suite_tensor_core,
    "diffusion-core": suite_diffusion,
    "composite": suite_composite,
}


def run_suites(module: str | None = None) -> list[CheckResult]:
    if module is not None:
        if module not in SUITES:
            raise ValueError(
                f"unknown gradcheck module {module!r}; choose from {sorted(SUITES)}")
        return SUITES[module]()
    results = []
    for fn in SUITES.values():
        results.extend(fn())
    return results
