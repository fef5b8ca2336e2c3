"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tensor` wraps a numpy array and, while gradients are enabled,
records the operation that produced it. :func:`backward` walks the recorded
graph once, accumulates adjoints, writes them into ``.grad`` on every tensor
that requires gradients, and then releases the graph.

Only the operations the rest of the package needs are implemented. Every
operation validates shapes up front, and any non-finite result raises
immediately instead of propagating NaN/Inf through the tape.

Graph construction and backward are single threaded per model; a finished
model is read only and safe to evaluate concurrently (see :func:`no_grad`,
which keeps its state in thread local storage).
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

_tape = threading.local()


def grad_enabled() -> bool:
    return getattr(_tape, "enabled", True)


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference and sampling)."""
    previous = grad_enabled()
    _tape.enabled = False
    try:
        yield
    finally:
        _tape.enabled = previous


class Tensor:
    """Dense float64 array that can participate in the gradient tape.

    Invariants: ``data`` is always finite (construction rejects NaN/Inf) and
    ``grad``, when populated, has the same shape as ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_grad_fn")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        data = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise NumericError(f"non-finite values in tensor '{name or 'tensor'}'")
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None

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
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of size {self.data.size}")
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def sum(self, axis: int | None = None) -> "Tensor":
        return tensor_sum(self, axis)

    def mean(self) -> "Tensor":
        return tensor_mean(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub_from(float(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __repr__(self) -> str:
        tag = f" '{self.name}'" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"


def _node(data, parents: Sequence[Tensor], grad_fn, op: str) -> Tensor:
    out = Tensor(data, name=op)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    return out


def _scalar(value) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise DimensionError(f"expected a Tensor or python scalar, got {type(value).__name__}")


def add(a: Tensor, b) -> Tensor:
    """a + b for same-shape tensors, a [n,k] + bias [k], or a + scalar."""
    if not isinstance(b, Tensor):
        c = _scalar(b)
        return _node(a.data + c, (a,), lambda g: (g,), "add")
    if a.shape == b.shape:
        return _node(a.data + b.data, (a, b), lambda g: (g, g), "add")
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return _node(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0)), "add")
    raise DimensionError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = _scalar(b)
        return _node(a.data - c, (a,), lambda g: (g,), "sub")
    if a.shape != b.shape:
        raise DimensionError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    return _node(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def sub_from(c: float, a: Tensor) -> Tensor:
    return _node(c - a.data, (a,), lambda g: (-g,), "rsub")


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product of same-shape tensors, or scaling by a scalar."""
    if not isinstance(b, Tensor):
        c = _scalar(b)
        return _node(a.data * c, (a,), lambda g: (g * c,), "mul")
    if a.shape != b.shape:
        raise DimensionError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def square(a: Tensor) -> Tensor:
    return _node(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), "square")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("matmul expects 2-d tensors")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dims {a.shape} @ {b.shape}")
    return _node(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x [n,i] @ weight [o,i]^T + bias [o], as a single tape node."""
    if x.ndim != 2 or weight.ndim != 2 or bias.ndim != 1:
        raise DimensionError("linear expects x [n,i], weight [o,i], bias [o]")
    if x.shape[1] != weight.shape[1] or weight.shape[0] != bias.shape[0]:
        raise DimensionError(
            f"linear: x {x.shape}, weight {weight.shape}, bias {bias.shape}"
        )
    out = x.data @ weight.data.T + bias.data
    return _node(
        out,
        (x, weight, bias),
        lambda g: (g @ weight.data, g.T @ x.data, g.sum(axis=0)),
        "linear",
    )


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    factor = np.where(a.data >= 0.0, 1.0, slope)
    return _node(a.data * factor, (a,), lambda g: (g * factor,), "leaky_relu")


def tensor_sum(a: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        return _node(
            a.data.sum(),
            (a,),
            lambda g: (np.full(a.shape, float(g)),),
            "sum",
        )
    if not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"sum: axis {axis} out of range for shape {a.shape}")
    norm_axis = axis % a.ndim

    def grad_fn(g):
        return (np.broadcast_to(np.expand_dims(g, norm_axis), a.shape).copy(),)

    return _node(a.data.sum(axis=norm_axis), (a,), grad_fn, "sum")


def tensor_mean(a: Tensor) -> Tensor:
    if a.size == 0:
        raise ContractError("mean of an empty tensor")
    count = float(a.size)
    return _node(
        a.data.mean(),
        (a,),
        lambda g: (np.full(a.shape, float(g) / count),),
        "mean",
    )


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ContractError("concat_cols of no tensors")
    rows = parts[0].shape[0]
    for p in parts:
        if p.ndim != 2 or p.shape[0] != rows:
            raise DimensionError("concat_cols expects 2-d tensors with equal row counts")
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def grad_fn(g):
        return tuple(g[:, offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return _node(
        np.concatenate([p.data for p in parts], axis=1), tuple(parts), grad_fn, "concat"
    )


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.ndim != 2:
        raise DimensionError("slice_cols expects a 2-d tensor")
    if not 0 <= start <= stop <= a.shape[1]:
        raise DimensionError(f"slice_cols: [{start}:{stop}] out of range for {a.shape}")

    def grad_fn(g):
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        return (full,)

    return _node(a.data[:, start:stop].copy(), (a,), grad_fn, "slice")


def gather_cols(a: Tensor, index: np.ndarray) -> Tensor:
    """Reorder columns by a permutation index; backward scatters through it."""
    if a.ndim != 2:
        raise DimensionError("gather_cols expects a 2-d tensor")
    index = np.asarray(index, dtype=np.intp)
    if index.shape != (a.shape[1],) or not np.array_equal(
        np.sort(index), np.arange(a.shape[1])
    ):
        raise ContractError("gather_cols index must be a permutation of the columns")
    inverse = np.argsort(index)
    return _node(a.data[:, index], (a,), lambda g: (g[:, inverse],), "gather")


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every reachable tensor that requires gradients.

    The loss must be a scalar produced by taped operations. Gradients
    accumulate into existing ``.grad`` buffers; the recorded graph is
    released before returning.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor")
    if loss.data.shape != ():
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    adjoints: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(topo):
        g = adjoints.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node._grad_fn is not None:
            contributions = node._grad_fn(g)
            for parent, contribution in zip(node._parents, contributions):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                held = adjoints.get(key)
                adjoints[key] = contribution if held is None else held + contribution
            node._parents = ()
            node._grad_fn = None
