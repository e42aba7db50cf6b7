"""Dense tensor with reverse-mode automatic differentiation.

The engine is deliberately small: a :class:`Tensor` wraps a numpy array, and
every differentiable operation is a :class:`Function` subclass that records
its parents. ``Tensor.backward`` walks the recorded graph in reverse
topological order.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Iterator, Sequence

import numpy as np

from caunet.errors import ContractError, DimensionError

DEFAULT_DTYPE = np.float32

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (eval-mode inference)."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Function:
    """Base class for graph nodes.

    ``forward`` receives raw arrays (plus keyword options) and returns an
    array; ``backward`` receives the upstream gradient array and returns one
    gradient (or ``None``) per parent, in parent order.
    """

    def __init__(self, *parents: "Tensor"):
        self.parents = parents

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs) -> "Tensor":
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        track = is_grad_enabled() and any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=track, _node=fn if track else None)


class Tensor:
    """N-dimensional array with an optional gradient slot."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, _node: Function | None = None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node = _node

    # -- array-like surface -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- arithmetic ---------------------------------------------------------
    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        return Add.apply(self, self._lift(other))

    __radd__ = __add__

    def __mul__(self, other):
        return Mul.apply(self, self._lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Mul.apply(self, Tensor(np.asarray(-1.0, dtype=self.dtype)))

    def __sub__(self, other):
        return Add.apply(self, -self._lift(other))

    def __rsub__(self, other):
        return Add.apply(self._lift(other), -self)

    def sum(self) -> "Tensor":
        return Sum.apply(self)

    def mean(self) -> "Tensor":
        return Mean.apply(self)

    def relu(self) -> "Tensor":
        return ReLU.apply(self)

    def sigmoid(self) -> "Tensor":
        return Sigmoid.apply(self)

    # -- autodiff -----------------------------------------------------------
    def backward(self, grad: np.ndarray | None = None) -> None:
        """Populate ``grad`` on every reachable tensor that requires it.

        Leaf gradients accumulate across calls; intermediate gradients are
        overwritten.
        """
        if grad is None:
            if self.data.size != 1:
                raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.dtype)
            if grad.shape != self.shape:
                raise DimensionError(f"seed gradient shape {grad.shape} != tensor shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("backward() called on a tensor that is not part of a graph")

        order = _topological_order(self)
        pending: dict[int, np.ndarray] = {id(self): grad}
        for t in reversed(order):
            g = pending.pop(id(t), None)
            if g is None:
                continue
            if t.node is None:
                t.grad = g.copy() if t.grad is None else t.grad + g
                continue
            t.grad = g
            parent_grads = t.node.backward(g)
            for parent, pg in zip(t.node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for p in t.node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def parameter(data, dtype=DEFAULT_DTYPE) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


# -- broadcasting -------------------------------------------------------------
def _is_scalar_shape(shape: tuple[int, ...]) -> bool:
    return all(d == 1 for d in shape)


def broadcast_shape(a: tuple[int, ...], b: tuple[int, ...], op: str = "op") -> tuple[int, ...]:
    """Result shape for the supported broadcast patterns.

    Supported: equal shapes, scalar against anything, and for 4-D operands
    N×C×1×1 or N×1×H×W against N×C×H×W.
    """
    if a == b:
        return a
    if _is_scalar_shape(b) and len(b) <= len(a):
        return a
    if _is_scalar_shape(a) and len(a) <= len(b):
        return b
    if len(a) == len(b) == 4:
        for small, big in ((a, b), (b, a)):
            if small[0] != big[0]:
                continue
            if small[1] == big[1] and small[2:] == (1, 1):
                return big
            if small[1] == 1 and small[2:] == big[2:]:
                return big
    raise DimensionError(f"{op}: shapes {a} and {b} are not broadcast-compatible")


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise and reduction nodes -------------------------------------------
class Add(Function):
    def forward(self, a, b):
        broadcast_shape(a.shape, b.shape, "add")
        return a + b

    def backward(self, grad):
        a, b = self.parents
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)


class Mul(Function):
    def forward(self, a, b):
        broadcast_shape(a.shape, b.shape, "mul")
        return a * b

    def backward(self, grad):
        a, b = self.parents
        ga = unbroadcast(grad * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(grad * a.data, b.shape) if b.requires_grad else None
        return ga, gb


class Sum(Function):
    def forward(self, x):
        return np.asarray(x.sum(), dtype=x.dtype)

    def backward(self, grad):
        (x,) = self.parents
        return (np.broadcast_to(grad, x.shape).astype(x.dtype),)


class Mean(Function):
    def forward(self, x):
        return np.asarray(x.mean(), dtype=x.dtype)

    def backward(self, grad):
        (x,) = self.parents
        return (np.full(x.shape, grad / x.size, dtype=x.dtype),)


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.maximum(x, x.dtype.type(0))  # propagates NaN so divergence stays visible

    def backward(self, grad):
        return (grad * self.mask,)


class Sigmoid(Function):
    def forward(self, x):
        z = np.exp(-np.abs(x))
        out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype, copy=False)
        # keep the range open so downstream gates never saturate to exactly 0 or 1
        info = np.finfo(x.dtype)
        out = np.clip(out, info.tiny, 1.0 - info.epsneg)
        self.out = out
        return out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Concat(Function):
    """Concatenation along the channel axis (axis 1)."""

    def forward(self, *xs):
        ref = xs[0].shape
        for x in xs[1:]:
            if x.ndim != len(ref) or x.shape[0] != ref[0] or x.shape[2:] != ref[2:]:
                raise DimensionError(f"concat_channels: shape {x.shape} incompatible with {ref} off axis 1")
        self.splits = np.cumsum([x.shape[1] for x in xs])[:-1]
        return np.concatenate(xs, axis=1)

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=1))


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(as_tensor(a), as_tensor(b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(as_tensor(a), as_tensor(b))


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def concat_channels(*xs: Tensor) -> Tensor:
    return Concat.apply(*xs)
