"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every network quantity is a :class:`Tensor` wrapping a contiguous float64
array.  Ops executed while a :class:`Tape` is active append one node each, in
execution order, so the tape is always topologically sorted and a single
reverse sweep computes all gradients.  Gradient accumulation is additive:
callers must zero grads between optimizer steps, and replaying a tape twice
doubles every gradient.

Tensors are treated as immutable once created (the optimizer mutates
``data`` in place between tapes, never during one); only ``grad`` buffers
are written during backward.  A tape must not be shared across threads.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import ContractError, ShapeError

Array = np.ndarray


class Tensor:
    """n-dimensional float64 value with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data: Array = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[Array] = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> Array:
        """A copy of the payload, safe to mutate."""
        return self.data.copy()

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- gradient buffer ----------------------------------------------
    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate_grad(self, arr: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += arr.reshape(self.data.shape)

    # -- operator sugar (defined at module bottom) --------------------
    def sum(self) -> "Tensor":
        return sum_all(self)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)


def constant(data) -> Tensor:
    """Wrap an array as a non-differentiable tensor."""
    return Tensor(data, requires_grad=False)


class _Node:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out: Tensor, inputs: tuple, vjp: Callable):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of ops; usable as a context manager.

    While active, every differentiable op whose output requires grad
    appends one node.  ``backward`` replays the nodes in reverse, visiting
    each exactly once.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _stack().pop()
        assert popped is self, "tapes closed out of order"

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)


_LOCAL = threading.local()


def _stack() -> list:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape() -> Optional[Tape]:
    stack = getattr(_LOCAL, "stack", None)
    return stack[-1] if stack else None


def _record(out: Tensor, inputs: tuple, vjp: Callable) -> None:
    stack = getattr(_LOCAL, "stack", None)
    if stack and out.requires_grad:
        stack[-1].nodes.append(_Node(out, inputs, vjp))


def backward(loss: Tensor, tape: Tape) -> None:
    """Propagate d(loss)/d(tensor) to every requires_grad tensor on the tape.

    ``loss`` must be a scalar.  Gradients are added into each tensor's
    ``grad`` buffer; calling backward again without zeroing accumulates.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
    holders: dict[int, Tensor] = {id(loss): loss}
    for node in reversed(tape.nodes):
        g_out = grads.get(id(node.out))
        if g_out is None:
            continue
        input_grads = node.vjp(g_out)
        for inp, g in zip(node.inputs, input_grads):
            if g is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
                holders[key] = inp
    for key, g in grads.items():
        t = holders[key]
        if t.requires_grad:
            t._accumulate_grad(g)


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------


def _coerce_pair(a, b):
    if not isinstance(a, Tensor):
        a = Tensor(a)
    if not isinstance(b, Tensor):
        b = Tensor(b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(
            f"elementwise operands need equal shapes or a scalar, got {a.shape} and {b.shape}"
        )
    return a, b


def _unbroadcast(g: Array, shape: tuple) -> Array:
    # only scalar-with-tensor broadcasting is supported
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape) if int(np.prod(shape, dtype=np.int64)) == 1 else g


def add(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    out = Tensor(a.data + b.data, requires_grad=a.requires_grad or b.requires_grad)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    _record(out, (a, b), vjp)
    return out


def sub(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    out = Tensor(a.data - b.data, requires_grad=a.requires_grad or b.requires_grad)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    _record(out, (a, b), vjp)
    return out


def mul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    out = Tensor(a.data * b.data, requires_grad=a.requires_grad or b.requires_grad)
    ad, bd = a.data, b.data

    def vjp(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    _record(out, (a, b), vjp)
    return out


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a plain python scalar (not a learnable quantity)."""
    factor = float(factor)
    out = Tensor(a.data * factor, requires_grad=a.requires_grad)
    _record(out, (a,), lambda g: (g * factor,))
    return out


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0), requires_grad=a.requires_grad)
    mask = a.data > 0.0

    def vjp(g):
        return (g * mask,)

    _record(out, (a,), vjp)
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y, requires_grad=a.requires_grad)

    def vjp(g):
        return (g * y * (1.0 - y),)

    _record(out, (a,), vjp)
    return out


def absolute(a: Tensor) -> Tensor:
    out = Tensor(np.abs(a.data), requires_grad=a.requires_grad)
    sign = np.sign(a.data)

    def vjp(g):
        return (g * sign,)

    _record(out, (a,), vjp)
    return out


def sqrt(a: Tensor) -> Tensor:
    y = np.sqrt(a.data)
    out = Tensor(y, requires_grad=a.requires_grad)

    def vjp(g):
        # subgradient 0 where the input is exactly 0
        return (g * np.where(y > 0.0, 0.5 / np.where(y > 0.0, y, 1.0), 0.0),)

    _record(out, (a,), vjp)
    return out


# ---------------------------------------------------------------------------
# reductions and structure
# ---------------------------------------------------------------------------


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.sum(a.data), requires_grad=a.requires_grad)
    shape = a.shape

    def vjp(g):
        return (np.broadcast_to(g, shape).copy() if shape else g,)

    _record(out, (a,), vjp)
    return out


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.size)


def sum_axis(a: Tensor, axis: int) -> Tensor:
    out = Tensor(np.sum(a.data, axis=axis), requires_grad=a.requires_grad)
    shape = a.shape

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    _record(out, (a,), vjp)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    out = Tensor(a.data.reshape(shape), requires_grad=a.requires_grad)
    orig = a.shape

    def vjp(g):
        return (g.reshape(orig),)

    _record(out, (a,), vjp)
    return out


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    out = Tensor(a.data.T.copy(), requires_grad=a.requires_grad)

    def vjp(g):
        return (g.T.copy(),)

    _record(out, (a,), vjp)
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    out = Tensor(
        np.concatenate([t.data for t in tensors], axis=axis),
        requires_grad=any(t.requires_grad for t in tensors),
    )
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(sizes))
        )

    _record(out, tuple(tensors), vjp)
    return out


def take_rows(a: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)
    if a.ndim < 1 or (idx.size and (idx.min() < 0 or idx.max() >= a.shape[0])):
        raise ShapeError(f"row indices out of range for shape {a.shape}")
    out = Tensor(a.data[idx], requires_grad=a.requires_grad)
    shape = a.shape

    def vjp(g):
        dx = np.zeros(shape)
        np.add.at(dx, idx, g)
        return (dx,)

    _record(out, (a,), vjp)
    return out


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.ndim != 2 or not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"column slice [{start}:{stop}] invalid for shape {a.shape}")
    out = Tensor(a.data[:, start:stop].copy(), requires_grad=a.requires_grad)
    shape = a.shape

    def vjp(g):
        dx = np.zeros(shape)
        dx[:, start:stop] = g
        return (dx,)

    _record(out, (a,), vjp)
    return out


# ---------------------------------------------------------------------------
# matrix product
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul got incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data, requires_grad=a.requires_grad or b.requires_grad)
    ad, bd = a.data, b.data

    def vjp(g):
        return g @ bd.T, ad.T @ g

    _record(out, (a, b), vjp)
    return out


# operator sugar
Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__matmul__ = lambda self, other: matmul(self, other)
Tensor.__neg__ = lambda self: neg(self)
