"""Dense real tensors with reverse-mode automatic differentiation.

Every op is a plain function returning a new :class:`Tensor` that remembers
its parents and a closure mapping the output gradient to parent gradients.
``Tensor.backward`` walks the recorded graph in reverse topological order.

Gradient accumulation: leaf tensors (``requires_grad=True`` and no parents)
*add* into ``.grad`` on every ``backward`` call, so two calls without
``zero_grad`` give twice the gradient. Interior nodes never keep gradients.
A graph may be back-propagated more than once.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import erf, expit


class ShapeError(ValueError):
    def __init__(self, op: str, *shapes) -> None:
        self.op = op
        self.shapes = shapes
        shown = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {shown}")


class NumericalFault(FloatingPointError):
    """Raised when an op produces NaN or Inf from its inputs."""


class GraphError(RuntimeError):
    pass


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block (forward-only evaluation)."""
    global _GRAD_ENABLED
    previous, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple[Tensor, ...] = (),
        _backward: BackwardFn | None = None,
        op: str = "",
    ) -> None:
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or (_GRAD_ENABLED and any(p.requires_grad for p in _parents))
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f", op={self.op}" if self.op else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def backward(self) -> None:
        if self.data.size != 1:
            raise GraphError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("backward() on a tensor that does not require grad")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.shape:
                    raise GraphError(
                        f"{node.op}: gradient shape {pg.shape} != input shape {parent.shape}"
                    )
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _all_finite(data: np.ndarray) -> bool:
    # one reduction in the common case; an overflowing sum falls back to the exact test
    with np.errstate(over="ignore", invalid="ignore"):
        if np.isfinite(data.sum()):
            return True
    return bool(np.all(np.isfinite(data)))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn, op: str) -> Tensor:
    if not _all_finite(data):
        raise NumericalFault(f"{op}: non-finite output")
    return Tensor(data, _parents=parents, _backward=backward, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), backward, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), "square")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)

    def backward(g):
        return (g * (cdf + x * pdf),)

    return _make(x * cdf, (a,), backward, "gelu")


# reductions and shape plumbing


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out), (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _make(np.asarray(out), (a,), backward, "mean")


def min_(a: Tensor, axis: int) -> Tensor:
    """Minimum along one axis; gradient flows to the first arg-min only."""
    axis = axis % a.ndim
    idx = np.argmin(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def backward(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (grad,)

    return _make(out, (a,), backward, "min")


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, shape) from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def astype(a: Tensor, dtype) -> Tensor:
    src = a.dtype
    return _make(a.data.astype(dtype), (a,), lambda g: (g.astype(src),), "astype")


def flatten(a: Tensor, start_axis: int = 1) -> Tensor:
    return reshape(a, a.shape[:start_axis] + (-1,))


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    if sorted(ax % a.ndim for ax in axes) != list(range(a.ndim)):
        raise ShapeError("transpose", a.shape, axes)
    inverse = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def take(a: Tensor, index) -> Tensor:
    """Basic or advanced indexing; repeated indices accumulate in the gradient."""
    out = a.data[index]

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _make(np.array(out), (a,), backward, "take")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(t.shape for t in tensors)) from None
    ax = axis % out.ndim
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(out, tuple(tensors), backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("stack", *(t.shape for t in tensors)) from None
    ax = axis % out.ndim

    def backward(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(tensors)))

    return _make(out, tuple(tensors), backward, "stack")


# linear algebra


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes (both operands >= 2-D)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map on the last axis; ``weight`` is (out_features, in_features)."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError("linear", x.shape, weight.shape)
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError("linear", weight.shape, bias.shape)
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        gx = g @ weight.data
        gw = g.reshape(-1, g.shape[-1]).T @ x.data.reshape(-1, x.shape[-1])
        if bias is None:
            return gx, gw
        return gx, gw, g.reshape(-1, g.shape[-1]).sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, backward, "linear")


def conv1d_k1(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Kernel-size-1 convolution over (batch, channels, length) input.

    ``weight`` is (out_channels, in_channels); stride 1, no padding.
    """
    if x.ndim != 3 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError("conv1d_k1", x.shape, weight.shape)
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError("conv1d_k1", weight.shape, bias.shape)
    out = np.einsum("oc,bcl->bol", weight.data, x.data)
    if bias is not None:
        out = out + bias.data[None, :, None]

    def backward(g):
        gx = np.einsum("oc,bol->bcl", weight.data, g)
        gw = np.einsum("bol,bcl->oc", g, x.data)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, backward, "conv1d_k1")


def embedding(table: Tensor, indices) -> Tensor:
    """Row lookup ``table[indices]``; ``indices`` is an integer array."""
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise TypeError("embedding indices must be integers")
    if table.ndim != 2 or (idx.size and (idx.min() < 0 or idx.max() >= table.shape[0])):
        raise ShapeError("embedding", table.shape, idx.shape)

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, idx, g)
        return (grad,)

    return _make(table.data[idx], (table,), backward, "embedding")


# normalisation and probability


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), backward, "softmax")


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(hd)) v over (..., L, hd) operands, fused.

    The backward pass never builds the L x L gradient of the scores. With
    P the attention weights, o the output and c_i = g_i . o_i,

        dq_i = s * sum_a g_ia [P (v_a * k)]_i - s * c_i [P k]_i
        dk_j = s * sum_a v_ja [P^T (g_a * q)]_j - s * [P^T (c q)]_j
        dv   = P^T g

    so only products of P with (L, hd^2) matrices are needed.
    """
    if q.ndim < 2 or q.shape != k.shape or k.shape[:-1] != v.shape[:-1]:
        raise ShapeError("attention", q.shape, k.shape, v.shape)
    hd = q.shape[-1]
    scale = 1.0 / np.sqrt(hd)
    # contiguous operands keep the (..., L, L) weights row-major for fast row reductions
    qd, kd, vd = (np.ascontiguousarray(t.data) for t in (q, k, v))
    kt = np.swapaxes(kd, -1, -2)
    if hd == 1:
        # rank-1 scores: the row max is q_i times the extreme k on q_i's side
        e = qd * kt
        m = np.maximum(qd * kt.max(axis=-1, keepdims=True), qd * kt.min(axis=-1, keepdims=True))
        e -= m
        if scale != 1.0:
            e *= qd.dtype.type(scale)
    else:
        e = (qd @ kt) * qd.dtype.type(scale)
        e -= e.max(axis=-1, keepdims=True)
    np.exp(e, out=e)
    # e holds unnormalised weights; P = e / z is never formed
    z = e.sum(axis=-1, keepdims=True)
    out = (e @ vd) / z

    def backward(g):
        lead, n = qd.shape[:-2], qd.shape[-2]
        c = (g * out).sum(axis=-1, keepdims=True)
        vk = (vd[..., :, None] * kd[..., None, :]).reshape(lead + (n, hd * hd))
        fwd = (e @ np.concatenate([vk, kd], axis=-1)) / z
        pvk = fwd[..., : hd * hd].reshape(lead + (n, hd, hd))
        dq = np.einsum("...ia,...iab->...ib", g, pvk) - c * fwd[..., hd * hd :]
        gq = (g[..., :, None] * qd[..., None, :]).reshape(lead + (n, hd * hd))
        back = np.swapaxes(e, -1, -2) @ (np.concatenate([gq, c * qd, g], axis=-1) / z)
        pgq = back[..., : hd * hd].reshape(lead + (n, hd, hd))
        dk = np.einsum("...ja,...jab->...jb", vd, pgq) - back[..., hd * hd : hd * hd + hd]
        dv = back[..., hd * hd + hd :]
        return (dq * scale).astype(qd.dtype), (dk * scale).astype(kd.dtype), dv.astype(vd.dtype)

    return _make(out, (q, k, v), backward, "attention")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply per-feature affine."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("layer_norm", x.shape, gamma.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv

    def backward(g):
        gxhat = g * gamma.data
        gx = inv * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        flat_g = g.reshape(-1, d)
        return gx, (flat_g * xhat.reshape(-1, d)).sum(axis=0), flat_g.sum(axis=0)

    return _make(xhat * gamma.data + beta.data, (x, gamma, beta), backward, "layer_norm")


class BatchNormStats:
    """Running mean/variance buffers for :func:`batch_norm` (not trained)."""

    __slots__ = ("mean", "var", "momentum", "eps")

    def __init__(self, features: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        self.mean = np.zeros(features, dtype=dtype)
        self.var = np.ones(features, dtype=dtype)
        self.momentum = momentum
        self.eps = eps


def batch_norm(
    x: Tensor, gamma: Tensor, beta: Tensor, stats: BatchNormStats, training: bool
) -> Tensor:
    """Batch norm over axis 0 of a (batch, features) input.

    In training mode batch statistics are used and the running buffers are
    updated in place (unbiased variance, as is conventional). In eval mode the
    op is a pure function of ``x`` and the buffers.
    """
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError("batch_norm", x.shape, gamma.shape)
    n = x.shape[0]
    if not training:
        inv = 1.0 / np.sqrt(stats.var + stats.eps)
        scale_ = gamma.data * inv
        out = (x.data - stats.mean) * scale_ + beta.data
        xhat = (x.data - stats.mean) * inv

        def backward_eval(g):
            return g * scale_, (g * xhat).sum(axis=0), g.sum(axis=0)

        return _make(out, (x, gamma, beta), backward_eval, "batch_norm")

    if n < 2:
        raise ValueError("batch_norm: training mode needs batch size >= 2")
    mu = x.data.mean(axis=0)
    centered = x.data - mu
    var = (centered * centered).mean(axis=0)
    inv = 1.0 / np.sqrt(var + stats.eps)
    xhat = centered * inv
    m = stats.momentum
    stats.mean[...] = (1 - m) * stats.mean + m * mu
    stats.var[...] = (1 - m) * stats.var + m * var * n / (n - 1)

    def backward(g):
        gxhat = g * gamma.data
        gx = inv * (gxhat - gxhat.mean(axis=0) - xhat * (gxhat * xhat).mean(axis=0))
        return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _make(xhat * gamma.data + beta.data, (x, gamma, beta), backward, "batch_norm")


def bce_with_logits(logits: Tensor, targets, mask=None) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(logits)`` against 0/1 targets.

    ``mask`` (same shape, 0/1) excludes entries from both the sum and the count.
    """
    t = np.asarray(targets, dtype=logits.dtype)
    if t.shape != logits.shape:
        raise ShapeError("bce_with_logits", logits.shape, t.shape)
    x = logits.data
    w = np.ones_like(x) if mask is None else np.asarray(mask, dtype=x.dtype)
    if w.shape != x.shape:
        raise ShapeError("bce_with_logits", x.shape, w.shape)
    count = w.sum()
    if count == 0:
        raise ValueError("bce_with_logits: mask excludes every entry")
    # max(x, 0) - x t + log(1 + exp(-|x|)) is the overflow-free form
    per = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    out = np.asarray((per * w).sum(dtype=np.float64) / count, dtype=x.dtype)

    def backward(g):
        return (g * w * (expit(x) - t) / count,)

    return _make(out, (logits,), backward, "bce_with_logits")
