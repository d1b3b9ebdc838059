"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation records its inputs and a closure that turns the gradient of
the output into gradients of the inputs (a vector-Jacobian product).
``backward`` walks those records once, in reverse topological order, adding
gradients into ``Tensor.grad``; fan-out therefore accumulates additively.
All arithmetic is 64-bit and deterministic: the same inputs always produce
bit-identical outputs.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ContractError, ShapeError

_grad_enabled = True

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


@contextlib.contextmanager
def no_grad():
    """Suspend graph recording; forward values are still computed."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense float64 array plus the bookkeeping needed for backprop.

    Tensors built inside an operation keep references to their parents and a
    VJP closure; leaf tensors (parameters, inputs) have neither.  ``grad`` is
    ``None`` until ``backward`` reaches the tensor, after which it is an array
    of the same shape as ``data``.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = op
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    def backward(self, params: Sequence["Tensor"] | None = None):
        backward(self, params=params)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], vjp, op: str) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True, op=op)
        out._parents = parents
        out._vjp = vjp
        return out
    return Tensor(data, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` over the axes numpy broadcast when producing it."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ---------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(data, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(data, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _node(data, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data / b.data

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.data.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return _node(data, (a, b), vjp, "div")


def neg(a) -> Tensor:
    a = _wrap(a)

    def vjp(g):
        return (-g,)

    return _node(-a.data, (a,), vjp, "neg")


def scale(a, c: float) -> Tensor:
    """Multiply by a Python scalar constant."""
    a = _wrap(a)
    c = float(c)

    def vjp(g):
        return (g * c,)

    return _node(a.data * c, (a,), vjp, "scale")


def power(a, p: float) -> Tensor:
    a = _wrap(a)
    p = float(p)
    data = a.data ** p

    def vjp(g):
        return (g * p * a.data ** (p - 1.0),)

    return _node(data, (a,), vjp, "power")


def exp(a) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _node(out, (a,), vjp, "exp")


def log(a) -> Tensor:
    a = _wrap(a)

    def vjp(g):
        return (g / a.data,)

    return _node(np.log(a.data), (a,), vjp, "log")


def sqrt(a) -> Tensor:
    a = _wrap(a)
    out = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / out,)

    return _node(out, (a,), vjp, "sqrt")


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    t = np.exp(-np.abs(a.data))
    out = np.where(a.data >= 0, 1.0 / (1.0 + t), t / (1.0 + t))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _node(out, (a,), vjp, "sigmoid")


def relu(a) -> Tensor:
    a = _wrap(a)

    def vjp(g):
        return (g * (a.data > 0),)

    return _node(np.maximum(a.data, 0.0), (a,), vjp, "relu")


def gelu(a) -> Tensor:
    """Exact (erf-based) Gaussian error linear unit."""
    a = _wrap(a)
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    out = a.data * cdf

    def vjp(g):
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
        return (g * (cdf + a.data * pdf),)

    return _node(out, (a,), vjp, "gelu")


def cos(a) -> Tensor:
    a = _wrap(a)

    def vjp(g):
        return (-g * np.sin(a.data),)

    return _node(np.cos(a.data), (a,), vjp, "cos")


def arccos(a) -> Tensor:
    a = _wrap(a)

    def vjp(g):
        return (-g / np.sqrt(1.0 - a.data * a.data),)

    return _node(np.arccos(a.data), (a,), vjp, "arccos")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes only through unclamped entries."""
    a = _wrap(a)
    inside = (a.data >= lo) & (a.data <= hi)

    def vjp(g):
        return (g * inside,)

    return _node(np.clip(a.data, lo, hi), (a,), vjp, "clip")


# -- structural ops ------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product; leading axes broadcast (batched matmul)."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _node(data, (a, b), vjp, "matmul")


def transpose(a, axes=None) -> Tensor:
    a = _wrap(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inv),)

    return _node(a.data.transpose(axes), (a,), vjp, "transpose")


def reshape(a, shape) -> Tensor:
    a = _wrap(a)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _node(a.data.reshape(shape), (a,), vjp, "reshape")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of an empty sequence")
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _node(data, tuple(ts), vjp, "concat")


def take(a, idx) -> Tensor:
    """Basic (slice/integer) indexing."""
    a = _wrap(a)
    data = a.data[idx]

    def vjp(g):
        out = np.zeros_like(a.data)
        out[idx] += g
        return (out,)

    return _node(np.array(data, copy=True), (a,), vjp, "take")


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _node(data, (a,), vjp, "sum")


def tensor_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[ax] for ax in axis]))
    else:
        count = a.data.shape[axis]

    def vjp(g):
        g = np.asarray(g) / count
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _node(data, (a,), vjp, "mean")


def stack_scalars(tensors: Sequence[Tensor]) -> Tensor:
    """Stack 0-d tensors into a vector (used to average per-sample losses)."""
    return concat([reshape(t, (1,)) for t in tensors], axis=0)


# -- normalization and composites -----------------------------------------


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax; each slice sums to one."""
    a = _wrap(a)
    if a.size == 0:
        raise ShapeError("softmax of an empty tensor")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (a,), vjp, "softmax")


def layernorm(t, gain, bias, eps: float = 1e-6) -> Tensor:
    """Normalize each trailing-axis row to zero mean, unit variance, then affine.

    Variance is the population variance; ``eps`` keeps constant rows finite.
    """
    t, gain, bias = _wrap(t), _wrap(gain), _wrap(bias)
    d = t.shape[-1] if t.ndim else 0
    if d < 2:
        raise ShapeError(f"layernorm needs rows of at least 2 entries, got last axis {d}")
    mu = tensor_mean(t, axis=-1, keepdims=True)
    centered = sub(t, mu)
    var = tensor_mean(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, eps), -0.5)
    return add(mul(mul(centered, inv), gain), bias)


def reduce_mean_var(t) -> tuple[Tensor, Tensor]:
    """Per-row mean and population variance over the trailing axis."""
    t = _wrap(t)
    d = t.shape[-1] if t.ndim else 0
    if d < 2:
        raise ShapeError(f"reduce_mean_var needs at least 2 entries per row, got last axis {d}")
    mu = tensor_mean(t, axis=-1)
    centered = sub(t, tensor_mean(t, axis=-1, keepdims=True))
    var = tensor_mean(mul(centered, centered), axis=-1)
    return mu, var


def scaled_dot_product_attention(q, k, v) -> tuple[Tensor, Tensor]:
    """softmax(q kᵀ / sqrt(d)) v over the trailing two axes.

    Returns (output, attention weights); weight rows each sum to one.
    """
    q, k, v = _wrap(q), _wrap(k), _wrap(v)
    dh = q.shape[-1]
    logits = scale(matmul(q, transpose(k, axes=(*range(k.ndim - 2), k.ndim - 1, k.ndim - 2))), 1.0 / math.sqrt(dh))
    attn = softmax(logits, axis=-1)
    return matmul(attn, v), attn


def cosine_to_columns(v, w) -> Tensor:
    """Cosine of the angle between a vector and each column of a matrix."""
    v, w = _wrap(v), _wrap(w)
    if w.ndim != 2:
        raise ShapeError(f"expected a 2-d weight matrix, got shape {w.shape}")
    flat = reshape(v, (1, v.size))
    if flat.shape[1] != w.shape[0]:
        raise ShapeError(f"vector of length {v.size} vs columns of length {w.shape[0]}")
    vnorm_sq = float((v.data * v.data).sum())
    if vnorm_sq == 0.0:
        raise ContractError("cosine_to_columns: zero-norm vector")
    colnorm_sq = (w.data * w.data).sum(axis=0)
    if (colnorm_sq == 0.0).any():
        bad = int(np.flatnonzero(colnorm_sq == 0.0)[0])
        raise ContractError(f"cosine_to_columns: zero-norm weight column {bad}")
    vnorm = power(tensor_sum(mul(v, v)), 0.5)
    colnorm = power(tensor_sum(mul(w, w), axis=0), 0.5)
    dots = reshape(matmul(flat, w), (w.shape[1],))
    return div(div(dots, vnorm), colnorm)


# -- backward pass ---------------------------------------------------------


def graph_nodes(root: Tensor) -> list[Tensor]:
    """All tensors reachable from ``root``, parents before children."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Sequence[Tensor] | None = None) -> None:
    """Populate ``grad`` on every reachable requires_grad tensor.

    Gradients accumulate additively into any existing ``grad`` (zero them
    between optimization steps).  Tensors passed via ``params`` that the
    graph never reaches receive an explicit zero gradient.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = graph_nodes(loss)
    flowing: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = flowing.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in flowing:
                flowing[key] = flowing[key] + pg
            else:
                flowing[key] = pg
    if params is not None:
        for p in params:
            if p.requires_grad and p.grad is None:
                p.grad = np.zeros_like(p.data)
