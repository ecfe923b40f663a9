"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every operation that involves a tensor with ``requires_grad`` set produces a
node holding references to its inputs and a backward rule.  Nodes receive a
monotonically increasing sequence number at creation, so sorting the reachable
nodes by that number gives a valid topological order: the creation sequence
*is* the tape.  ``Tensor.backward`` walks it once, in reverse.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Tensor",
    "ShapeError",
    "ContractError",
    "NonFiniteError",
    "no_grad",
    "is_grad_enabled",
    "tensor",
    "concat",
    "stack",
    "where",
    "masked_fill",
    "sigmoid",
    "tanh",
    "gelu",
    "leaky_relu",
    "softplus",
    "exp",
    "log",
    "softmax",
    "log_softmax",
    "layer_norm",
    "l2_normalize",
    "scaled_dot_product",
    "take",
    "segment_sum",
    "check_finite",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


class ContractError(RuntimeError):
    """Raised when a caller violates an operation's precondition."""


class NonFiniteError(FloatingPointError):
    """Raised when NaN or Inf shows up where finite values are required."""


_state = threading.local()
_seq = itertools.count()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference, finite differences)."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "_seq", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"
        self._seq = next(_seq)

    # -- construction -------------------------------------------------------------------
    @classmethod
    def _result(cls, data: np.ndarray, parents: tuple["Tensor", ...], backward, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        out._seq = next(_seq)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # -- basic properties ---------------------------------------------------------------
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
    def T(self) -> "Tensor":
        return self.transpose()

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- reverse pass -------------------------------------------------------------------
    def backward(self, leaves: Iterable["Tensor"] | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf.

        ``leaves`` that the loss does not depend on get a zero gradient.
        """
        if self.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {self.shape}")
        if self.requires_grad:
            order: list[Tensor] = []
            seen: set[int] = set()
            stack = [self]
            while stack:
                node = stack.pop()
                if id(node) in seen:
                    continue
                seen.add(id(node))
                order.append(node)
                stack.extend(p for p in node._parents if p.requires_grad)
            order.sort(key=lambda t: t._seq, reverse=True)

            grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
            for node in order:
                g = grads.pop(id(node), None)
                if g is None:
                    continue
                if node._backward is None:
                    node.grad = np.array(g, copy=True) if node.grad is None else node.grad + g
                    continue
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    key = id(parent)
                    prev = grads.get(key)
                    grads[key] = pg if prev is None else prev + pg
        if leaves is not None:
            for leaf in leaves:
                if leaf.grad is None:
                    leaf.grad = np.zeros_like(leaf.data)

    # -- arithmetic -----------------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(_wrap(other), self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # -- shape and reductions -------------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _broadcast_shape(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------------------
# elementwise binary
# ---------------------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_shape("add", a.data, b.data)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return Tensor._result(a.data + b.data, (a, b), backward, "add")


def neg(a: Tensor) -> Tensor:
    return Tensor._result(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_shape("mul", a.data, b.data)
    A, B = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g * B, A.shape) if a.requires_grad else None
        gb = _unbroadcast(g * A, B.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._result(A * B, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_shape("div", a.data, b.data)
    A, B = a.data, b.data
    out = A / B

    def backward(g):
        ga = _unbroadcast(g / B, A.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / B, B.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._result(out, (a, b), backward, "div")


def power(a: Tensor, p: float) -> Tensor:
    if isinstance(p, Tensor):
        raise ContractError("power: exponent must be a python scalar")
    A = a.data
    out = A**p

    def backward(g):
        return (g * p * A ** (p - 1),)

    return Tensor._result(out, (a,), backward, "pow")


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    A, B = a.data, b.data
    if A.ndim == 0 or B.ndim == 0:
        raise ShapeError(f"matmul: scalar operands not allowed, got {A.shape} and {B.shape}")
    k_b = B.shape[-2] if B.ndim > 1 else B.shape[0]
    if A.shape[-1] != k_b:
        raise ShapeError(f"matmul: inner dimensions differ, got {A.shape} @ {B.shape}")
    try:
        out = A @ B
    except ValueError:
        raise ShapeError(f"matmul: incompatible batch dimensions {A.shape} @ {B.shape}") from None

    def backward(g):
        A2 = A if A.ndim > 1 else A[None, :]
        B2 = B if B.ndim > 1 else B[:, None]
        g2 = g
        if A.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if B.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g2 @ np.swapaxes(B2, -1, -2), A2.shape).reshape(A.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(A2, -1, -2) @ g2, B2.shape).reshape(B.shape)
        return ga, gb

    return Tensor._result(out, (a, b), backward, "matmul")


def where(cond, a, b) -> Tensor:
    """Select ``a`` where ``cond`` is true, else ``b``; ``cond`` is a constant mask."""
    a, b = _wrap(a), _wrap(b)
    cond = np.asarray(cond, dtype=bool)
    out = np.where(cond, a.data, b.data)

    def backward(g):
        ga = _unbroadcast(np.where(cond, g, 0.0), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.where(cond, 0.0, g), b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._result(out, (a, b), backward, "where")


def masked_fill(x: Tensor, mask, value: float) -> Tensor:
    mask = np.asarray(mask, dtype=bool)
    _broadcast_shape("masked_fill", x.data, mask)
    out = np.where(mask, value, x.data)

    def backward(g):
        return (_unbroadcast(np.where(mask, 0.0, g), x.shape),)

    return Tensor._result(out, (x,), backward, "masked_fill")


# ---------------------------------------------------------------------------------------
# elementwise unary
# ---------------------------------------------------------------------------------------


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._result(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    X = x.data
    return Tensor._result(np.log(X), (x,), lambda g: (g / X,), "log")


def sigmoid(x: Tensor) -> Tensor:
    X = x.data
    # numerically stable in both tails
    e = np.exp(-np.abs(X))
    out = np.where(X >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return Tensor._result(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor._result(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh approximation of GELU; smooth everywhere, which keeps gradient checks clean."""
    X = x.data
    X2 = X * X
    t = np.tanh(_GELU_C * X * (1.0 + 0.044715 * X2))
    out = 0.5 * X * (1.0 + t)

    def backward(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * X2)
        return (g * (0.5 * (1.0 + t) + 0.5 * X * (1.0 - t * t) * du),)

    return Tensor._result(out, (x,), backward, "gelu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    X = x.data
    pos = X > 0
    out = np.where(pos, X, slope * X)
    return Tensor._result(out, (x,), lambda g: (np.where(pos, g, slope * g),), "leaky_relu")


def softplus(x: Tensor) -> Tensor:
    X = x.data
    out = np.logaddexp(0.0, X)
    sig = 0.5 * (1.0 + np.tanh(0.5 * X))
    return Tensor._result(out, (x,), lambda g: (g * sig,), "softplus")


def absolute(x: Tensor) -> Tensor:
    X = x.data
    return Tensor._result(np.abs(X), (x,), lambda g: (g * np.sign(X),), "abs")


# ---------------------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------------------


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    shape = x.shape
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return Tensor._result(np.asarray(out), (x,), backward, "sum")


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    shape = x.shape
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape),)

    return Tensor._result(np.asarray(out), (x,), backward, "mean")


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {src} into {tuple(shape)}") from None
    return Tensor._result(out, (x,), lambda g: (g.reshape(src),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return Tensor._result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def getitem(x: Tensor, idx) -> Tensor:
    if isinstance(idx, Tensor):
        raise ContractError("getitem: index with numpy arrays, not tensors")
    shape = x.shape
    out = x.data[idx]

    basic = _is_basic_index(idx)

    def backward(g):
        full = np.zeros(shape)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return Tensor._result(np.array(out, copy=True), (x,), backward, "getitem")


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    arrays = [t.data for t in tensors]
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[a.shape for a in arrays]} on axis {axis}") from None
    ax = axis % out.ndim
    splits = np.cumsum([a.shape[ax] for a in arrays])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=ax))

    return Tensor._result(out, tuple(tensors), backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: shapes differ {[t.shape for t in tensors]}") from None
    ax = axis % out.ndim

    def backward(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(tensors)))

    return Tensor._result(out, tuple(tensors), backward, "stack")


def _segment_matrix(segments: np.ndarray, num_segments: int) -> sp.csr_matrix:
    n = len(segments)
    return sp.csr_matrix((np.ones(n), (segments, np.arange(n))), shape=(num_segments, n))


def _segment_sum_array(X: np.ndarray, segments: np.ndarray, num_segments: int, axis: int) -> np.ndarray:
    moved = np.moveaxis(X, axis, 0)
    rest = moved.shape[1:]
    flat = np.ascontiguousarray(moved).reshape(moved.shape[0], -1)
    out = _segment_matrix(segments, num_segments) @ flat
    return np.moveaxis(np.asarray(out).reshape((num_segments,) + rest), 0, axis)


def take(x: Tensor, indices, axis: int = 0) -> Tensor:
    """Gather slices of ``x`` along ``axis``; backward scatters with a sparse sum."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"take: indices must be 1-D, got shape {idx.shape}")
    ax = axis % x.ndim
    n = x.shape[ax]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f"take: index out of range for axis of length {n}")
    out = np.take(x.data, idx, axis=ax)
    return Tensor._result(out, (x,), lambda g: (_segment_sum_array(g, idx, n, ax),), "take")


def segment_sum(x: Tensor, segments, num_segments: int, axis: int = 0) -> Tensor:
    """Sum slices of ``x`` along ``axis`` that share a segment id."""
    seg = np.asarray(segments, dtype=np.int64)
    ax = axis % x.ndim
    if seg.shape != (x.shape[ax],):
        raise ShapeError(f"segment_sum: {seg.shape[0] if seg.ndim else 0} ids for axis of length {x.shape[ax]}")
    out = _segment_sum_array(x.data, seg, num_segments, ax)
    return Tensor._result(out, (x,), lambda g: (np.take(g, seg, axis=ax),), "segment_sum")


# ---------------------------------------------------------------------------------------
# composite-but-fused ops
# ---------------------------------------------------------------------------------------


def softmax(x: Tensor, axis: int = -1, mask=None) -> Tensor:
    """Softmax along ``axis``; ``mask`` (True = excluded) entries get probability 0."""
    X = x.data
    if mask is not None:
        X = np.where(np.asarray(mask, dtype=bool), -np.inf, X)
    m = np.max(X, axis=axis, keepdims=True)
    e = np.exp(X - m)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._result(out, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    X = x.data
    m = np.max(X, axis=axis, keepdims=True)
    shifted = X - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def backward(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return Tensor._result(out, (x,), backward, "log_softmax")


def layer_norm(x: Tensor, weight: Tensor | None = None, bias: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply the optional affine map."""
    X = x.data
    mu = X.mean(axis=-1, keepdims=True)
    xc = X - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    W = weight.data if weight is not None else None
    out = xhat * W if W is not None else xhat
    if bias is not None:
        out = out + bias.data
    parents = tuple(t for t in (x, weight, bias) if t is not None)
    batch_axes = tuple(range(X.ndim - 1))

    def backward(g):
        gxhat = g * W if W is not None else g
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True) - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        grads = [gx]
        if weight is not None:
            grads.append((g * xhat).sum(axis=batch_axes))
        if bias is not None:
            grads.append(g.sum(axis=batch_axes))
        return tuple(grads)

    return Tensor._result(out, parents, backward, "layer_norm")


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    X = x.data
    norm = np.sqrt((X * X).sum(axis=axis, keepdims=True))
    if np.any(norm <= eps):
        raise ContractError("l2_normalize: zero-length vector")
    out = X / norm

    def backward(g):
        return ((g - out * (g * out).sum(axis=axis, keepdims=True)) / norm,)

    return Tensor._result(out, (x,), backward, "l2_normalize")


def scaled_dot_product(q: Tensor, k: Tensor, scale: float | None = None) -> Tensor:
    """``q @ k^T * scale`` over the last two axes; default scale is 1/sqrt(d)."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"scaled_dot_product: feature dims differ, {q.shape} vs {k.shape}")
    s = 1.0 / np.sqrt(q.shape[-1]) if scale is None else scale
    return matmul(q, k.swapaxes(-1, -2)) * s


def check_finite(x, what: str = "tensor") -> None:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NonFiniteError(f"{what}: {bad} non-finite value(s)")
