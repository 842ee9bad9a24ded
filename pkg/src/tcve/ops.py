"""Network operators over :class:`~tcve.tensor.Tensor`.

Convolutions lower to an im2col copy plus BLAS matrix products; the input
gradient scatters the column gradient back into the padded input, one strided
add per kernel offset. Everything here is differentiable and checked against
central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, sigmoid, sqrt

_AXIS_NAMES = ("depth", "height", "width")


def _conv_nd(x: Tensor, w: Tensor, b: Tensor | None, stride: int, pad: int, nd: int) -> Tensor:
    name = f"conv{nd}d"
    if x.ndim != nd + 2:
        raise ValueError(f"{name}: input must have rank {nd + 2}, got rank {x.ndim}")
    if w.ndim != nd + 2:
        raise ValueError(f"{name}: kernel must have rank {nd + 2}, got rank {w.ndim}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(
            f"{name}: input channels {x.shape[1]} (dim 1) != kernel channels {w.shape[1]}")
    if b is not None and b.shape != (w.shape[0],):
        raise ValueError(
            f"{name}: bias shape {b.shape} != (out_channels,) = ({w.shape[0]},)")
    if stride < 1:
        raise ValueError(f"{name}: stride must be >= 1, got {stride}")
    if pad < 0:
        raise ValueError(f"{name}: pad must be >= 0, got {pad}")
    spatial = x.shape[2:]
    ksize = w.shape[2:]
    out_spatial = []
    for i, (ext, k) in enumerate(zip(spatial, ksize)):
        if k > ext + 2 * pad:
            axis = _AXIS_NAMES[3 - nd + i] if nd > 1 else "length"
            raise ValueError(
                f"{name}: kernel extent {k} exceeds padded input {axis} {ext + 2 * pad}")
        out_spatial.append((ext + 2 * pad - k) // stride + 1)
    out_spatial = tuple(out_spatial)
    n, cin = x.shape[:2]
    cout = w.shape[0]
    out_prod = int(np.prod(out_spatial))
    k_prod = int(np.prod(ksize))

    pad_width = ((0, 0), (0, 0)) + ((pad, pad),) * nd
    xp = np.pad(x.data, pad_width) if pad else x.data
    win_shape = xp.shape[:2] + out_spatial + ksize
    win_strides = (xp.strides[:2]
                   + tuple(xp.strides[2 + i] * stride for i in range(nd))
                   + xp.strides[2:])
    windows = np.lib.stride_tricks.as_strided(xp, win_shape, win_strides)
    # im2col: (N, *out, C, *k) contiguous, then a single gemm
    perm = (0,) + tuple(range(2, 2 + nd)) + (1,) + tuple(range(2 + nd, 2 + 2 * nd))
    cols = np.ascontiguousarray(windows.transpose(perm)).reshape(n * out_prod, cin * k_prod)
    w_mat = w.data.reshape(cout, cin * k_prod)
    out_mat = cols @ w_mat.T
    if b is not None:
        out_mat = out_mat + b.data
    out = np.ascontiguousarray(
        np.moveaxis(out_mat.reshape((n,) + out_spatial + (cout,)), -1, 1))

    parents = (x, w) if b is None else (x, w, b)

    def backward(g: np.ndarray):
        g_mat = np.ascontiguousarray(np.moveaxis(g, 1, -1)).reshape(n * out_prod, cout)
        grad_w = (g_mat.T @ cols).reshape(w.shape)
        grad_cols = (g_mat @ w_mat).reshape((n,) + out_spatial + (cin,) + ksize)
        # (N, C, *out, *k) for the scatter
        grad_cols = np.moveaxis(grad_cols, 1 + nd, 1)
        gxp = np.zeros_like(xp)
        head = (slice(None), slice(None))
        for koff in np.ndindex(*ksize):
            sl = tuple(slice(k, k + stride * o, stride) for k, o in zip(koff, out_spatial))
            gxp[head + sl] += grad_cols[head + (slice(None),) * nd + koff]
        if pad:
            unpad = tuple(slice(pad, pad + ext) for ext in spatial)
            gx = np.ascontiguousarray(gxp[head + unpad])
        else:
            gx = gxp
        grads = [(x, gx), (w, grad_w)]
        if b is not None:
            grads.append((b, g.sum(axis=(0,) + tuple(range(2, 2 + nd)))))
        return grads

    return Tensor._make(out, parents, backward)


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """1D convolution over (N, C, L) with kernel (C', C, k)."""
    return _conv_nd(x, w, b, stride, pad, 1)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """2D convolution over (N, C, H, W) with kernel (C', C, kh, kw)."""
    return _conv_nd(x, w, b, stride, pad, 2)


def conv3d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """3D convolution over (N, C, D, H, W) with kernel (C', C, kd, kh, kw)."""
    return _conv_nd(x, w, b, stride, pad, 3)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map on the trailing axis: x @ w.T + b with w shaped (out, in)."""
    if x.shape[-1] != w.shape[1]:
        raise ValueError(
            f"linear: input features {x.shape[-1]} != weight in-features {w.shape[1]}")
    y = x @ w.transpose_last()
    if b is not None:
        y = y + b
    return y


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    return x * sigmoid(x)


def group_norm(x: Tensor, groups: int, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Per-sample group normalization with channelwise affine.

    Channels are split into ``groups`` contiguous groups; each (sample, group)
    slice is shifted to zero mean and scaled to unit variance before the
    affine. Channel count must be divisible by ``groups``.
    """
    if x.ndim < 2:
        raise ValueError(f"group_norm: input must have rank >= 2, got {x.ndim}")
    n, c = x.shape[0], x.shape[1]
    if groups < 1 or c % groups != 0:
        raise ValueError(f"group_norm: channels {c} not divisible by groups {groups}")
    if gain.shape != (c,) or bias.shape != (c,):
        raise ValueError(f"group_norm: gain/bias must be shaped ({c},)")
    grouped = x.reshape(n, groups, -1)
    mu = grouped.mean(axis=2, keepdims=True)
    centered = grouped - mu
    var = (centered * centered).mean(axis=2, keepdims=True)
    normed = (centered / sqrt(var + eps)).reshape(x.shape)
    affine_shape = (1, c) + (1,) * (x.ndim - 2)
    return normed * gain.reshape(affine_shape) + bias.reshape(affine_shape)


def interp_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """Linear interpolation weights (n_out, n_in), align-corners-false.

    Output sample j reads source coordinate (j + 0.5) * n_in / n_out - 0.5,
    clamped with edge replication; rows sum to 1, so constants are preserved
    exactly.
    """
    if n_out < 1:
        raise ValueError(f"interp_matrix: target extent must be >= 1, got {n_out}")
    mat = np.zeros((n_out, n_in), dtype=dtype)
    scale = n_in / n_out
    for j in range(n_out):
        src = (j + 0.5) * scale - 0.5
        i0 = int(np.floor(src))
        frac = src - i0
        lo = min(max(i0, 0), n_in - 1)
        hi = min(max(i0 + 1, 0), n_in - 1)
        mat[j, lo] += 1.0 - frac
        mat[j, hi] += frac
    return mat


_RESIZE_EINSUM = (("ncdhw,xd->ncxhw", "ncdhw,dx->ncxhw"),
                  ("ncdhw,xh->ncdxw", "ncdhw,hx->ncdxw"),
                  ("ncdhw,xw->ncdhx", "ncdhw,wx->ncdhx"))


def resize_trilinear(x: Tensor, size: tuple[int, int, int]) -> Tensor:
    """Trilinear resize of the trailing (D, H, W) axes of a rank-5 tensor.

    Identity (the same tensor) when the target equals the input extents.
    """
    if x.ndim != 5:
        raise ValueError(f"resize_trilinear: input must have rank 5, got {x.ndim}")
    size = tuple(int(s) for s in size)
    if len(size) != 3:
        raise ValueError(f"resize_trilinear: target must have 3 extents, got {size}")
    for name, s in zip(_AXIS_NAMES, size):
        if s < 1:
            raise ValueError(f"resize_trilinear: target {name} must be >= 1, got {s}")
    if size == x.shape[2:]:
        return x
    mats = [interp_matrix(x.shape[2 + i], size[i], dtype=x.dtype) for i in range(3)]

    def apply(data: np.ndarray, transposed: bool) -> np.ndarray:
        out = data
        for i, mat in enumerate(mats):
            subscripts = _RESIZE_EINSUM[i][1 if transposed else 0]
            out = np.einsum(subscripts, out, mat)
        return np.ascontiguousarray(out)

    out = apply(x.data, transposed=False)
    return Tensor._make(out, (x,), lambda g: [(x, apply(g, transposed=True))])


def repeat_axis(x: Tensor, repeats: int, axis: int) -> Tensor:
    """Nearest-neighbor upsampling of one axis by an integer factor."""
    if repeats < 1:
        raise ValueError(f"repeat_axis: repeats must be >= 1, got {repeats}")
    axis = axis % x.ndim
    data = np.repeat(x.data, repeats, axis=axis)
    n = x.shape[axis]

    def backward(g: np.ndarray):
        shape = g.shape[:axis] + (n, repeats) + g.shape[axis + 1:]
        return [(x, g.reshape(shape).sum(axis=axis + 1))]

    return Tensor._make(data, (x,), backward)


def upsample_nearest(x: Tensor, axes: tuple[int, ...], factor: int = 2) -> Tensor:
    out = x
    for ax in axes:
        out = repeat_axis(out, factor, ax)
    return out
