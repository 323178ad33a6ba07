"""Small reverse-mode automatic differentiation over numpy arrays.

Only the operations needed by the BRDF models, the MLPs and the training
losses are provided. Every function accepts plain ndarrays as well; in that
case it simply forwards to numpy and no graph is recorded.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = [True]


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation-only passes)."""
    prev = _GRAD_ENABLED[0]
    _GRAD_ENABLED[0] = False
    try:
        yield
    finally:
        _GRAD_ENABLED[0] = prev


class Tensor:
    """An ndarray with an optional backward closure.

    Tensors created by operations on inputs that do not require gradients
    carry no parents, so constant sub-expressions cost nothing on the tape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    __array_priority__ = 100.0
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    # -- metadata ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return _make(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    # -- backward ---------------------------------------------------------
    def backward(self, grad: np.ndarray | float | None = None) -> None:
        """Accumulate ``d(self)/d(leaf)`` into ``leaf.grad`` for every leaf
        that requires gradients."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        grad = np.broadcast_to(np.asarray(grad, dtype=self.data.dtype), self.data.shape)

        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _needs_grad(parent):
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _needs_grad(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if id(p) not in seen and _needs_grad(p):
                stack.append((p, False))
    return order


def _make(data, parents: Iterable[Tensor], backward) -> Tensor:
    parents = tuple(parents)
    out = Tensor(data)
    if _GRAD_ENABLED[0] and any(_needs_grad(p) for p in parents):
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _raw(x):
    return x.data if isinstance(x, Tensor) else x


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def value(x) -> np.ndarray:
    """Underlying array of a Tensor or the array itself."""
    return np.asarray(_raw(x))


# -- binary arithmetic ----------------------------------------------------
def add(a, b):
    if not (is_tensor(a) or is_tensor(b)):
        return a + b
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    if not (is_tensor(a) or is_tensor(b)):
        return a - b
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    if not (is_tensor(a) or is_tensor(b)):
        return a * b
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if _needs_grad(a) else None
        gb = _unbroadcast(g * a.data, b.shape) if _needs_grad(b) else None
        return ga, gb

    return _make(out, (a, b), backward)


def div(a, b):
    if not (is_tensor(a) or is_tensor(b)):
        return a / b
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if _needs_grad(a) else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if _needs_grad(b) else None
        return ga, gb

    return _make(out, (a, b), backward)


def power(a, exponent: float):
    """``a ** exponent`` for a constant exponent."""
    if not is_tensor(a):
        return np.power(a, exponent)
    out = np.power(a.data, exponent)
    return _make(out, (a,), lambda g: (g * exponent * np.power(a.data, exponent - 1),))


def matmul(a, b):
    if not (is_tensor(a) or is_tensor(b)):
        return a @ b
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data @ b.data

    def backward(g):
        ga = g @ b.data.T if _needs_grad(a) else None
        gb = a.data.T @ g if _needs_grad(b) else None
        return ga, gb

    return _make(out, (a, b), backward)


# -- unary ----------------------------------------------------------------
def exp(x):
    if not is_tensor(x):
        return np.exp(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def log(x):
    if not is_tensor(x):
        return np.log(x)
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x):
    if not is_tensor(x):
        return np.sqrt(x)
    out = np.sqrt(x.data)
    return _make(out, (x,), lambda g: (g * 0.5 / out,))


def abs_(x):
    if not is_tensor(x):
        return np.abs(x)
    return _make(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def relu(x):
    """ReLU with subgradient 0 at exactly 0."""
    if not is_tensor(x):
        return np.maximum(x, 0)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0), (x,), lambda g: (g * mask,))


def _sigmoid_np(x):
    # split branches keep exp() from overflowing
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x):
    if not is_tensor(x):
        return _sigmoid_np(np.asarray(x))
    out = _sigmoid_np(x.data)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def _softplus_np(x):
    x = np.asarray(x)
    return np.where(x > 30, x, np.log1p(np.exp(np.minimum(x, 30))))


def softplus(x):
    """log(1 + e^x); returns x itself above 30 to stay overflow-free."""
    if not is_tensor(x):
        return _softplus_np(x)
    out = _softplus_np(x.data)
    return _make(out, (x,), lambda g: (g * _sigmoid_np(x.data),))


def clip(x, lo: float, hi: float):
    """Clamp to [lo, hi]; the gradient is zero wherever the clamp is active."""
    if not is_tensor(x):
        return np.clip(x, lo, hi)
    inside = (x.data >= lo) & (x.data <= hi)
    return _make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


def maximum(x, floor: float):
    """Elementwise max against a constant floor."""
    if not is_tensor(x):
        return np.maximum(x, floor)
    keep = x.data >= floor
    return _make(np.maximum(x.data, floor), (x,), lambda g: (g * keep,))


# -- reductions and shape -------------------------------------------------
def sum_(x, axis=None, keepdims: bool = False):
    if not is_tensor(x):
        return np.sum(x, axis=axis, keepdims=keepdims)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _make(out, (x,), backward)


def mean(x, axis=None, keepdims: bool = False):
    if not is_tensor(x):
        return np.mean(x, axis=axis, keepdims=keepdims)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return sum_(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def take(x, index):
    """Basic or advanced indexing (``x[index]``)."""
    if not is_tensor(x):
        return x[index]
    out = x.data[index]
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(i, (slice, int, type(None), type(Ellipsis))) for i in parts)

    def backward(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(out, (x,), backward)


def concat(parts: Sequence, axis: int = -1):
    if not any(is_tensor(p) for p in parts):
        return np.concatenate(parts, axis=axis)
    parts = [_as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, parts, backward)


def reshape(x, shape):
    if not is_tensor(x):
        return np.reshape(x, shape)
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def broadcast_to(x, shape):
    if not is_tensor(x):
        return np.broadcast_to(x, shape)
    return _make(np.broadcast_to(x.data, shape), (x,), lambda g: (_unbroadcast(g, x.shape),))


def lerp(a, b, t):
    """``a + (b - a) * t`` (GLSL ``mix``)."""
    return a + (b - a) * t


def custom(x, forward: Callable[[np.ndarray], np.ndarray],
           derivative: Callable[[np.ndarray], np.ndarray]):
    """Apply an elementwise function with a known derivative."""
    if not is_tensor(x):
        return forward(np.asarray(x))
    out = forward(x.data)
    return _make(out, (x,), lambda g: (g * derivative(x.data),))
