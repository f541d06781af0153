"""Dense tensors with eager reverse-mode differentiation.

Every :class:`Tensor` is also a node of the computation graph: results of
differentiable operations remember their parents and a closure that maps the
output gradient to one gradient per parent. Values are read-only once built.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ShapeError

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Skip graph construction inside the block (thread-local)."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def branch_log() -> Iterator[list[bytes]]:
    """Collect the discrete choices (floors, argmaxes, clamp masks) made by piecewise ops."""
    prev = getattr(_state, "branches", None)
    log: list[bytes] = []
    _state.branches = log
    try:
        yield log
    finally:
        _state.branches = prev


def record_branch(*arrays) -> None:
    log = getattr(_state, "branches", None)
    if log is not None:
        log.extend(np.asarray(a).tobytes() for a in arrays)


def _as_array(data, dtype=None) -> np.ndarray:
    if dtype is None:
        if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            dtype = data.dtype
        else:
            dtype = np.float64
    arr = np.array(data, dtype=dtype)
    arr.flags.writeable = False
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """An immutable dense array that can take part in a gradient graph.

    ``op`` names the operation that produced the tensor (``"leaf"`` for
    user-created tensors); ``parents`` are its inputs. After
    :func:`backward`, ``grad`` holds d(root)/d(self) with the same dims.
    """

    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self.parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], op: str,
                backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.asarray(data)
        out.data.flags.writeable = False
        out.requires_grad = False
        out.grad = None
        out.op = "leaf"
        out.parents = ()
        out._backward = None
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.op = op
            out.parents = tuple(parents)
            out._backward = backward
        return out

    # -- array-like surface -------------------------------------------------
    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    shape = dims

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(dims={list(self.dims)}, op={self.op}{flag})"

    # -- arithmetic ---------------------------------------------------------
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis, keepdims)

    def reshape(self, *dims) -> "Tensor":
        if len(dims) == 1 and isinstance(dims[0], (tuple, list)):
            dims = tuple(dims[0])
        return reshape(self, dims)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _binary_operands(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(b, dtype=a.dtype)
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(a, dtype=b.dtype)
    return as_tensor(a), as_tensor(b)


def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    return Tensor.from_op(a.data + b.data, (a, b), "add",
                          lambda g: (_unbroadcast(g, a.dims), _unbroadcast(g, b.dims)))


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    return Tensor.from_op(a.data - b.data, (a, b), "sub",
                          lambda g: (_unbroadcast(g, a.dims), _unbroadcast(-g, b.dims)))


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    return Tensor.from_op(a.data * b.data, (a, b), "mul",
                          lambda g: (_unbroadcast(g * b.data, a.dims),
                                     _unbroadcast(g * a.data, b.dims)))


def div(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    out = a.data / b.data
    return Tensor.from_op(out, (a, b), "div",
                          lambda g: (_unbroadcast(g / b.data, a.dims),
                                     _unbroadcast(-g * out / b.data, b.dims)))


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data ** exponent
    return Tensor.from_op(out, (a,), "pow",
                          lambda g: (g * exponent * a.data ** (exponent - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor.from_op(out, (a,), "exp", lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return Tensor.from_op(np.log(a.data), (a,), "log", lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return Tensor.from_op(out, (a,), "sqrt", lambda g: (g * 0.5 / out,))


def clip(a: Tensor, lo: float | None = None, hi: float | None = None) -> Tensor:
    """Clamp values; the gradient is passed only where no clamping happened."""
    out = np.clip(a.data, lo, hi)
    inside = out == a.data
    record_branch(inside)
    return Tensor.from_op(out, (a,), "clip", lambda g: (g * inside,))


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.dims).copy(),)

    return Tensor.from_op(np.asarray(out), (a,), "sum", backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.dims[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / float(n))


def amax(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Maximum along one axis; ties send the gradient to the first maximum."""
    idx = np.argmax(a.data, axis=axis)
    record_branch(idx)
    idx_k = np.expand_dims(idx, axis)
    out = np.take_along_axis(a.data, idx_k, axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, idx_k, g, axis=axis)
        return (grad,)

    return Tensor.from_op(out, (a,), "max", backward)


def reshape(a: Tensor, dims: Sequence[int]) -> Tensor:
    return Tensor.from_op(a.data.reshape(dims), (a,), "reshape",
                          lambda g: (g.reshape(a.dims),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    inverse = np.argsort(axes)
    return Tensor.from_op(a.data.transpose(axes), (a,), "transpose",
                          lambda g: (g.transpose(inverse),))


def take(a: Tensor, index) -> Tensor:
    out = a.data[index]

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return Tensor.from_op(np.array(out), (a,), "index", backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.dims[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor.from_op(out, tensors, "concat",
                          lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return concat([reshape(t, t.dims[:axis] + (1,) + t.dims[axis:]) for t in tensors], axis)


# -- reverse pass -----------------------------------------------------------

def _topological_order(root: Tensor) -> list[Tensor]:
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
    """Populate ``.grad`` on every graph node reachable from a scalar root."""
    if root.data.size != 1:
        raise ShapeError(f"backward needs a scalar root, got dims {list(root.dims)}")
    if not root.requires_grad:
        return
    order = _topological_order(root)
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        node.grad = np.zeros_like(node.data) if g is None else g
        if node._backward is None or g is None:
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg


# -- finite differences -----------------------------------------------------

def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5) -> float:
    """Max over elements of |analytic - central difference| / max(1, |central difference|)."""
    return grad_check_params(lambda p: f(p["x"]), {"x": as_tensor(x)}, eps)["x"]


def grad_check_params(f: Callable[[Mapping[str, Tensor]], Tensor],
                      params: Mapping[str, Tensor], eps: float = 1e-5,
                      max_elements: int | None = None,
                      rng: np.random.Generator | None = None,
                      skip_kinks: bool = False,
                      skipped: dict[str, int] | None = None) -> dict[str, float]:
    """Finite-difference check of ``f`` against every named input.

    With ``max_elements`` set, each group is probed at that many randomly
    chosen positions (drawn from ``rng``) instead of exhaustively. With
    ``skip_kinks``, a probe whose +eps and -eps evaluations take different
    branches of a piecewise op (see :func:`branch_log`) is discarded, since a
    central difference across a kink does not estimate the derivative; the
    number discarded per group goes to ``skipped``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = {k: np.array(v.data, dtype=np.float64) for k, v in params.items()}
    leaves = {k: Tensor(v, requires_grad=True) for k, v in base.items()}
    with branch_log() as reference:
        backward(f(leaves))
    rng = rng if rng is not None else np.random.default_rng(0)

    def evaluate(name, value, pos, step):
        bumped = value.copy().reshape(-1)
        bumped[pos] += step
        inputs = {k: Tensor(v) for k, v in base.items()}
        inputs[name] = Tensor(bumped.reshape(value.shape))
        with no_grad(), branch_log() as log:
            out = float(f(inputs).data.sum())
        return out, log

    errors = {}
    for name, value in base.items():
        order = np.arange(value.size)
        limit = value.size
        if max_elements is not None and value.size > max_elements:
            order = rng.permutation(value.size)
            limit = max_elements
        grad = leaves[name].grad
        grad = np.zeros(value.size) if grad is None else grad.reshape(-1)
        analytic, numeric, dropped = [], [], 0
        for pos in order:
            if len(analytic) == limit:
                break
            plus, log_plus = evaluate(name, value, pos, eps)
            minus, log_minus = evaluate(name, value, pos, -eps)
            if skip_kinks and not (log_plus == reference == log_minus):
                dropped += 1
                continue
            analytic.append(grad[pos])
            numeric.append((plus - minus) / (2 * eps))
        errors[name] = _relative_error(np.array(analytic), np.array(numeric))
        if skipped is not None:
            skipped[name] = dropped
    return errors
