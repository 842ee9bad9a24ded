"""N-dimensional tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a contiguous row-major numpy array plus an optional
gradient accumulator. Operations build a DAG of closures; ``backward()`` on a
scalar walks the graph once in reverse topological order and accumulates
``dloss/dleaf`` into every leaf that requires a gradient.

Values are immutable by convention after construction (only ``grad`` mutates),
backward is single-threaded per graph, and graphs are acyclic by construction.
Default dtype is float32; gradient checking runs in float64.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        arr = arr.astype(np.float32)
    elif dtype is None and not isinstance(data, np.ndarray):
        # Python scalars and lists default to the float32 working dtype.
        arr = arr.astype(np.float32)
    return np.ascontiguousarray(arr)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Array with optional gradient tracking.

    Attributes:
        data: contiguous row-major numpy array (float32 or float64).
        grad: same-shape numpy accumulator, populated by ``backward``.
        requires_grad: whether this node participates in differentiation.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Iterable[tuple[Tensor, np.ndarray]]] | None = None

    # ------------------------------------------------------------------
    # basic properties

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{flag})"

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        if self.data.dtype == np.dtype(dtype):
            return self
        out = Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)
        if self.requires_grad:
            src = self
            out._parents = (src,)
            out._backward = lambda g: [(src, g.astype(src.data.dtype))]
        return out

    def zero_grad(self) -> None:
        self.grad = None

    # ------------------------------------------------------------------
    # graph construction

    @staticmethod
    def _make(data: np.ndarray, parents: Sequence["Tensor"],
              backward: Callable[[np.ndarray], Iterable[tuple["Tensor", np.ndarray]]]) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad or p._backward is not None for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self) -> None:
        """Accumulate dself/dleaf into every requires_grad leaf.

        Requires a scalar; repeated calls without ``zero_grad`` accumulate.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        flows: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = flows.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in node._backward(g):
                if not (parent.requires_grad or parent._backward is not None):
                    continue
                acc = flows.get(id(parent))
                flows[id(parent)] = pg if acc is None else acc + pg

    # ------------------------------------------------------------------
    # dtype discipline for binary ops

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            if other.data.dtype != self.data.dtype:
                raise TypeError(
                    f"dtype mismatch: {self.data.dtype.name} vs {other.data.dtype.name}")
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    # ------------------------------------------------------------------
    # arithmetic

    def __add__(self, other) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other
        out = Tensor._make(a.data + b.data, (a, b), lambda g: [
            (a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape))])
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        a = self
        return Tensor._make(-a.data, (a,), lambda g: [(a, -g)])

    def __sub__(self, other) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other
        return Tensor._make(a.data - b.data, (a, b), lambda g: [
            (a, _unbroadcast(g, a.shape)), (b, _unbroadcast(-g, b.shape))])

    def __rsub__(self, other) -> "Tensor":
        return self._coerce(other).__sub__(self)

    def __mul__(self, other) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other
        return Tensor._make(a.data * b.data, (a, b), lambda g: [
            (a, _unbroadcast(g * b.data, a.shape)),
            (b, _unbroadcast(g * a.data, b.shape))])

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other
        return Tensor._make(a.data / b.data, (a, b), lambda g: [
            (a, _unbroadcast(g / b.data, a.shape)),
            (b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))])

    def __rtruediv__(self, other) -> "Tensor":
        return self._coerce(other).__truediv__(self)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    # ------------------------------------------------------------------
    # reductions

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self
        data = a.data.sum(axis=axis, keepdims=keepdims)

        def backward(g: np.ndarray):
            if axis is None:
                return [(a, np.broadcast_to(g, a.shape).copy())]
            gg = g
            if not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                for ax in sorted(ax % a.ndim for ax in axes):
                    gg = np.expand_dims(gg, ax)
            return [(a, np.broadcast_to(gg, a.shape).copy())]

        return Tensor._make(np.asarray(data), (a,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = 1
            for ax in axes:
                count *= self.shape[ax % self.ndim]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # ------------------------------------------------------------------
    # shape ops

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        try:
            data = a.data.reshape(shape)
        except ValueError:
            raise ValueError(
                f"reshape: cannot view {a.size} elements of shape {a.shape} as {shape}") from None
        old = a.shape
        return Tensor._make(data, (a,), lambda g: [(a, g.reshape(old))])

    def permute(self, *order) -> "Tensor":
        if len(order) == 1 and isinstance(order[0], (tuple, list)):
            order = tuple(order[0])
        a = self
        if sorted(order) != list(range(a.ndim)):
            raise ValueError(f"permute: {order} is not a permutation of axes of rank {a.ndim}")
        inv = np.argsort(order)
        data = np.ascontiguousarray(np.transpose(a.data, order))
        return Tensor._make(data, (a,), lambda g: [
            (a, np.ascontiguousarray(np.transpose(g, inv)))])

    def transpose_last(self) -> "Tensor":
        """Swap the two trailing axes (matrix transpose over batch dims)."""
        order = tuple(range(self.ndim - 2)) + (self.ndim - 1, self.ndim - 2)
        return self.permute(order)


# ----------------------------------------------------------------------
# free functions


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with broadcasting over leading axes."""
    b = a._coerce(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul: operands must have rank >= 2, got {a.ndim} and {b.ndim}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(
            f"matmul: inner extents differ, {a.shape[-1]} (dim {a.ndim - 1} of a) "
            f"vs {b.shape[-2]} (dim {b.ndim - 2} of b)")
    data = np.matmul(a.data, b.data)

    def backward(g: np.ndarray):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return [(a, _unbroadcast(ga, a.shape)), (b, _unbroadcast(gb, b.shape))]

    return Tensor._make(data, (a, b), backward)


def sigmoid(x: Tensor) -> Tensor:
    y = np.empty_like(x.data)
    pos = x.data >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    y[~pos] = ex / (1.0 + ex)
    return Tensor._make(y, (x,), lambda g: [(x, g * y * (1.0 - y))])


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)
    return Tensor._make(y, (x,), lambda g: [(x, g * 0.5 / y)])


def softmax(x: Tensor, axis: int) -> Tensor:
    """Numerically stable softmax along ``axis`` (max subtraction)."""
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"softmax: axis {axis} out of range for rank {x.ndim}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return [(x, y * (g - dot))]

    return Tensor._make(y, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    ref = tensors[0]
    parts = [ref._coerce(t) for t in tensors]
    data = np.concatenate([t.data for t in parts], axis=axis)
    sizes = [t.shape[axis] for t in parts]

    def backward(g: np.ndarray):
        grads = []
        start = 0
        for t, s in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + s)
            grads.append((t, np.ascontiguousarray(g[tuple(sl)])))
            start += s
        return grads

    return Tensor._make(data, parts, backward)


def as_tensor(value, dtype=np.float32) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


# ----------------------------------------------------------------------
# gradient checking


def finite_difference_grad(f: Callable[[], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f`` w.r.t. the entries of ``x``.

    ``x`` is perturbed in place and restored; the step is scaled by each
    entry's magnitude.
    """
    if not x.flags["C_CONTIGUOUS"]:
        raise ValueError("finite differences require a contiguous array "
                         "(reshape would copy and drop the perturbations)")
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        h = step * max(1.0, abs(float(orig)))
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-2) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(make_loss: Callable[[], Tensor], params: Sequence[Tensor],
                    step: float = 1e-5, floor: float = 1e-2) -> float:
    """Max relative error between backprop and finite-difference gradients.

    ``make_loss`` must rebuild the scalar loss from the live ``params`` data
    so in-place perturbations are observed. Run in float64.
    """
    for p in params:
        p.zero_grad()
    loss = make_loss()
    loss.backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = finite_difference_grad(lambda: make_loss().item(), p.data, step)
        worst = max(worst, max_relative_error(analytic, numeric, floor))
    return worst
