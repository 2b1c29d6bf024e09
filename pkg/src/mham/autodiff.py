"""Small reverse-mode autodiff engine over numpy arrays.

Every op returns a :class:`Node` holding its value, its parents and a closure
that pushes the upstream gradient back into the parents.  The graph is rebuilt
for every forward pass; :func:`backward` sorts it topologically and sweeps it in
reverse.

Only the primitives the summarization model needs are provided.  Binary ops
follow numpy broadcasting and reduce the gradient back to each operand's shape.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested op."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


def set_default_dtype(dtype) -> None:
    """Switch the float precision used for new constants and parameters."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Node:
    """A value in the computation graph.

    ``grad`` is allocated lazily on first accumulation and has the value's
    shape.  Gradients add up across calls to :func:`backward`; call
    :meth:`zero_grad` between optimizer steps.
    """

    __slots__ = ("value", "grad", "parents", "_backward", "requires_grad", "name", "op")

    def __init__(self, value, parents: tuple = (), backward_fn: Callable | None = None,
                 requires_grad: bool = False, name: str | None = None, op: str = "leaf"):
        if not isinstance(value, np.ndarray):
            value = np.asarray(value, dtype=_DEFAULT_DTYPE)
        self.value = value
        self.grad = None
        self.parents = parents
        self._backward = backward_fn
        self.requires_grad = requires_grad
        self.name = name
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.value.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(op={self.op}, shape={self.shape})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def parameter(value, name: str | None = None) -> Node:
    return Node(np.array(value, dtype=_DEFAULT_DTYPE), requires_grad=True, name=name)


def constant(value) -> Node:
    if isinstance(value, Node):
        return value
    arr = np.asarray(value)
    if arr.dtype.kind != "f":
        arr = arr.astype(_DEFAULT_DTYPE)
    return Node(arr)


def _make(value: np.ndarray, parents: Sequence[Node], backward_fn, op: str) -> Node:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{op} produced a non-finite value")
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Node(value, tuple(parents), backward_fn, requires_grad=True, op=op)
    return Node(value, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a: Node, b: Node, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# --------------------------------------------------------------------------
# binary elementwise ops


def add(a, b) -> Node:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.value + b.value, (a, b), backward, "add")


def sub(a, b) -> Node:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.value - b.value, (a, b), backward, "sub")


def mul(a, b) -> Node:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.value, b.shape))

    return _make(a.value * b.value, (a, b), backward, "mul")


def div(a, b) -> Node:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "div")
    out = a.value / b.value

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * out / b.value, b.shape))

    return _make(out, (a, b), backward, "div")


def scale(a: Node, c: float) -> Node:
    def backward(g):
        a._accumulate(g * c)

    return _make(a.value * c, (a,), backward, "scale")


def matmul(a, b) -> Node:
    a, b = constant(a), constant(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.value.T)
        if b.requires_grad:
            b._accumulate(a.value.T @ g)

    return _make(a.value @ b.value, (a, b), backward, "matmul")


# --------------------------------------------------------------------------
# unary ops


def tanh(a: Node) -> Node:
    out = np.tanh(a.value)

    def backward(g):
        a._accumulate(g * (1.0 - out * out))

    return _make(out, (a,), backward, "tanh")


def sigmoid(a: Node) -> Node:
    x = a.value
    # two-branch form avoids exp overflow for large |x|
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)

    def backward(g):
        a._accumulate(g * out * (1.0 - out))

    return _make(out, (a,), backward, "sigmoid")


def exp(a: Node) -> Node:
    with np.errstate(over="ignore"):
        out = np.exp(a.value)

    def backward(g):
        a._accumulate(g * out)

    return _make(out, (a,), backward, "exp")


def log(a: Node) -> Node:
    def backward(g):
        a._accumulate(g / a.value)

    return _make(np.log(a.value), (a,), backward, "log")


def _check_axis(a: Node, axis: int, op: str) -> None:
    if a.ndim == 0:
        raise DimensionError(f"{op} needs at least one axis")
    if a.shape[axis] == 0:
        raise DimensionError(f"{op}: empty axis {axis}")


def softmax(a: Node, axis: int = -1) -> Node:
    _check_axis(a, axis, "softmax")
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        a._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _make(out, (a,), backward, "softmax")


def log_softmax(a: Node, axis: int = -1) -> Node:
    _check_axis(a, axis, "log_softmax")
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        p = np.exp(out)
        a._accumulate(g - p * g.sum(axis=axis, keepdims=True))

    return _make(out, (a,), backward, "log_softmax")


# --------------------------------------------------------------------------
# structural ops


def sum(a: Node, axis=None, keepdims: bool = False) -> Node:  # noqa: A001
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(np.asarray(out), (a,), backward, "sum")


def concat(nodes: Sequence, axis: int = 0) -> Node:
    nodes = [constant(n) for n in nodes]
    if not nodes:
        raise DimensionError("concat of nothing")
    try:
        out = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    bounds = np.cumsum([0] + [n.shape[axis] for n in nodes])

    def backward(g):
        for n, lo, hi in zip(nodes, bounds[:-1], bounds[1:]):
            if n.requires_grad:
                n._accumulate(np.take(g, np.arange(lo, hi), axis=axis))

    return _make(out, nodes, backward, "concat")


def stack(nodes: Sequence, axis: int = 0) -> Node:
    nodes = [constant(n) for n in nodes]
    try:
        out = np.stack([n.value for n in nodes], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"stack: {exc}") from None

    def backward(g):
        for i, n in enumerate(nodes):
            if n.requires_grad:
                n._accumulate(np.take(g, i, axis=axis))

    return _make(out, nodes, backward, "stack")


def reshape(a: Node, shape: tuple) -> Node:
    try:
        out = a.value.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: {exc}") from None

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _make(out, (a,), backward, "reshape")


def getitem(a: Node, idx) -> Node:
    """Basic or integer-array indexing; the gradient is scattered back."""
    out = a.value[idx]
    parts = idx if isinstance(idx, tuple) else (idx,)
    fancy = any(isinstance(p, (list, np.ndarray)) for p in parts)

    def backward(g):
        full = np.zeros_like(a.value)
        if fancy:
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        a._accumulate(full)

    return _make(np.array(out), (a,), backward, "getitem")


# --------------------------------------------------------------------------
# recurrent cell


def gru_cell(x: Node, h: Node, W: Node, U_rz: Node, U_h: Node, b: Node) -> Node:
    """One GRU update for row-vector inputs.

    ``W`` is ``(d_in, 3*d)`` with column blocks [reset | update | candidate],
    ``U_rz`` is ``(d, 2*d)``, ``U_h`` is ``(d, d)`` and ``b`` is ``(3*d,)``.
    """
    d = h.shape[-1]
    if W.shape != (x.shape[-1], 3 * d) or U_rz.shape != (d, 2 * d) or U_h.shape != (d, d) \
            or b.shape != (3 * d,):
        raise DimensionError(
            f"gru_cell: x{x.shape} h{h.shape} W{W.shape} U_rz{U_rz.shape} "
            f"U_h{U_h.shape} b{b.shape} are inconsistent")
    xw = add(matmul(x, W), b)
    rz = sigmoid(add(xw[:, : 2 * d], matmul(h, U_rz)))
    r, z = rz[:, :d], rz[:, d:]
    cand = tanh(add(xw[:, 2 * d:], matmul(mul(r, h), U_h)))
    return add(h, mul(z, sub(cand, h)))


# --------------------------------------------------------------------------
# reverse sweep


def topological_order(root: Node) -> list[Node]:
    """Nodes reachable from ``root`` that need gradients, parents first."""
    order: list[Node] = []
    seen: set[int] = set()
    stack_: list[tuple[Node, bool]] = [(root, False)]
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


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable node."""
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    tape = topological_order(loss)
    for node in tape:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            # interior gradients are not needed once pushed to the parents
            node.grad = None if node.parents else node.grad


def numerical_gradient(f: Callable[[], float], param: Node, h: float = 1e-5,
                       indices: Iterable | None = None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. entries of ``param``."""
    grad = np.zeros_like(param.value)
    flat = param.value.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        grad.reshape(-1)[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max entry error scaled by the tensor's largest gradient magnitude."""
    denom = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / denom)
