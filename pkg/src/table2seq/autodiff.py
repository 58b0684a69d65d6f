"""Small reverse-mode automatic differentiation over float64 numpy arrays.

Every model equation is composed from the primitives here, so gradients of
the training loss are produced by :func:`backward` and can be checked against
finite differences.  The tape is dynamic: each forward call builds a fresh
graph of :class:`Tensor` nodes that reference their parents.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "DomainError",
    "parameter",
    "constant",
    "no_grad",
    "grad_enabled",
    "add",
    "sub",
    "mul",
    "tanh",
    "sigmoid",
    "log",
    "elementwise",
    "matmul",
    "softmax",
    "concat",
    "stack",
    "mean_columns",
    "take",
    "pick",
    "total",
    "backward",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """Operation is undefined for the given input (empty list, non-scalar root...)."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Run forward computations without recording the tape (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A node on the tape: forward value, parents and gradient accumulator."""

    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "op")

    def __init__(self, value, requires_grad: bool = False, op: str = "leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"

    # operator sugar; the named functions below are the primitives
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(value) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False, op="const")


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _node(value: np.ndarray, parents: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    out = Tensor(value, op=op)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.backward_fn = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _node(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        "add",
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _node(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
        "sub",
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "mul")
    av, bv = a.value, b.value
    return _node(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        "mul",
    )


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    v = x.value
    # split by sign so exp never overflows
    e = np.exp(-np.abs(v))
    y = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def log(x: Tensor, floor: float = 0.0) -> Tensor:
    """Natural log; inputs below ``floor`` are clamped and receive no gradient."""
    v = x.value
    clamped = v < floor if floor > 0.0 else np.zeros(v.shape, dtype=bool)
    safe = np.where(clamped, floor, v)
    return _node(
        np.log(safe),
        (x,),
        lambda g: (np.where(clamped, 0.0, g / safe),),
        "log",
    )


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "tanh": tanh, "sigmoid": sigmoid}


def elementwise(op: str, *args: Tensor) -> Tensor:
    """Dispatch one of ``add, sub, mul, tanh, sigmoid`` by name.

    Binary operands must have equal shapes here; broadcasting is only
    available through the direct functions.
    """
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise DomainError(f"unknown elementwise op {op!r}") from None
    if len(args) == 2 and args[0].shape != args[1].shape:
        raise ShapeError(f"{op}: shapes {args[0].shape} and {args[1].shape} differ")
    return fn(*args)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for rank-1/rank-2 operands (numpy ``@`` semantics)."""
    if a.value.ndim == 0 or b.value.ndim == 0 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value

    def grads(g):
        a2 = av.reshape(1, -1) if av.ndim == 1 else av
        b2 = bv.reshape(-1, 1) if bv.ndim == 1 else bv
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        return (g2 @ b2.T).reshape(av.shape), (a2.T @ g2).reshape(bv.shape)

    return _node(av @ bv, (a, b), grads, "matmul")


def softmax(x: Tensor) -> Tensor:
    if x.value.ndim != 1 or x.size == 0:
        raise DomainError(f"softmax expects a non-empty vector, got shape {x.shape}")
    e = np.exp(x.value - x.value.max())
    y = e / e.sum()
    return _node(y, (x,), lambda g: (y * (g - np.dot(g, y)),), "softmax")


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Join tensors along their last axis (vectors end to end)."""
    if not parts:
        raise DomainError("concat of an empty list")
    ndim = parts[0].value.ndim
    if ndim == 0 or any(p.value.ndim != ndim or p.shape[:-1] != parts[0].shape[:-1] for p in parts):
        raise ShapeError(f"concat: incompatible shapes {[p.shape for p in parts]}")
    if len(parts) == 1:
        return parts[0]
    offsets = np.cumsum([0] + [p.shape[-1] for p in parts])

    def grads(g):
        return tuple(g[..., offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return _node(np.concatenate([p.value for p in parts], axis=-1), tuple(parts), grads, "concat")


def stack(rows: Sequence[Tensor]) -> Tensor:
    """Stack equal-length vectors into a matrix, one row per vector."""
    if not rows:
        raise DomainError("stack of an empty list")
    if any(r.value.ndim != 1 or r.shape != rows[0].shape for r in rows):
        raise ShapeError(f"stack: incompatible shapes {[r.shape for r in rows]}")
    return _node(
        np.stack([r.value for r in rows]),
        tuple(rows),
        lambda g: tuple(g[i] for i in range(len(rows))),
        "stack",
    )


def mean_columns(vectors: Sequence[Tensor]) -> Tensor:
    """Element-wise mean of equal-length vectors, summed left to right."""
    if not vectors:
        raise DomainError("mean of an empty list")
    if any(v.value.ndim != 1 or v.shape != vectors[0].shape for v in vectors):
        raise ShapeError(f"mean_columns: incompatible shapes {[v.shape for v in vectors]}")
    acc = np.zeros(vectors[0].shape)
    for v in vectors:
        acc = acc + v.value
    n = len(vectors)
    return _node(acc / n, tuple(vectors), lambda g: tuple(g / n for _ in range(n)), "mean")


def take(matrix: Tensor, index) -> Tensor:
    """Row lookup: an int gives one row vector, a sequence gives a matrix."""
    idx = np.asarray(index, dtype=np.int64)
    shape = matrix.shape

    def grads(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _node(matrix.value[idx], (matrix,), grads, "take")


def pick(x: Tensor, i: int) -> Tensor:
    """Single element of a vector as a scalar tensor."""
    shape = x.shape

    def grads(g):
        out = np.zeros(shape)
        out[i] = g
        return (out,)

    return _node(x.value[i], (x,), grads, "pick")


def total(x: Tensor) -> Tensor:
    """Sum of all entries as a scalar."""
    shape = x.shape
    return _node(np.sum(x.value), (x,), lambda g: (np.full(shape, g),), "sum")


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Populate ``.grad`` of every tensor reachable from the scalar ``root``.

    All accumulators in the graph are reset to zero first, so repeated calls
    give identical gradients.
    """
    if root.size != 1:
        raise DomainError(f"backward needs a scalar root, got shape {root.shape}")
    order = _topological(root)
    for node in order:
        node.grad = np.zeros(node.shape)
    root.grad = np.ones(root.shape)
    for node in reversed(order):
        if node.backward_fn is None:
            continue
        for parent, g in zip(node.parents, node.backward_fn(node.grad)):
            if g is not None and parent.requires_grad:
                parent.grad = parent.grad + g


def leaves(root: Tensor) -> Iterable[Tensor]:
    return (n for n in _topological(root) if n.backward_fn is None)
