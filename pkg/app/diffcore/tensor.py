"""
Reverse-mode differentiation over numpy arrays.

A `Tensor` wraps a float64 array. Every operation on tensors that require
gradients records its parents and a closure that pushes the output gradient
back to them; `backward()` replays the tape in reverse topological order.
The op set is deliberately small (affine, rectifier, sigmoid, tanh, softplus,
abs, exp, log, sum, product, power, plus the layout ops the renderers need).
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from app.utils.error_handler import NumericError, ShapeError

ArrayLike = Union["Tensor", np.ndarray, float, int]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sums `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """float64 array node of the differentiation tape."""

    __array_priority__ = 100  # make ndarray <op> Tensor dispatch to Tensor

    def __init__(
        self,
        data,
        parents: Sequence["Tensor"] = (),
        op: str = "leaf",
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.parents = tuple(parents)
        self.op = op
        self.name = name
        self.requires_grad = requires_grad
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    # --- construction helpers ---
    @staticmethod
    def lift(value: ArrayLike) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(value)

    @classmethod
    def _result(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        op: str,
        backward: Callable[[np.ndarray], Iterable[Optional[np.ndarray]]],
    ) -> "Tensor":
        needs = any(p.requires_grad for p in parents)
        out = cls(data, parents if needs else (), op, requires_grad=needs)
        if needs:
            def _push(grad: np.ndarray) -> None:
                for parent, g in zip(parents, backward(grad)):
                    if g is None or not parent.requires_grad:
                        continue
                    g = _unbroadcast(np.asarray(g, dtype=np.float64), parent.data.shape)
                    parent.grad = g.copy() if parent.grad is None else parent.grad + g
            out._backward = _push
        return out

    # --- properties ---
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    # --- arithmetic ---
    def __add__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        return Tensor._result(self.data + other.data, (self, other), "add", lambda g: (g, g))

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._result(-self.data, (self,), "neg", lambda g: (-g,))

    def __sub__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        return Tensor._result(self.data - other.data, (self, other), "sub", lambda g: (g, -g))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Tensor.lift(other) - self

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        a, b = self.data, other.data
        return Tensor._result(a * b, (self, other), "mul", lambda g: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        a, b = self.data, other.data
        return Tensor._result(a / b, (self, other), "div", lambda g: (g / b, -g * a / (b * b)))

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return Tensor.lift(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise ShapeError("power only supports a constant exponent")
        p = float(exponent)
        a = self.data
        return Tensor._result(a ** p, (self,), "pow", lambda g: (g * p * a ** (p - 1.0),))

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        return Tensor._result(a @ b, (self, other), "matmul", lambda g: (g @ b.T, a.T @ g))

    def __getitem__(self, index) -> "Tensor":
        a = self.data

        def _back(g):
            full = np.zeros_like(a)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._result(a[index], (self,), "index", _back)

    # --- reductions and layout ---
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self.data

        def _back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape),)

        return Tensor._result(a.sum(axis=axis, keepdims=keepdims), (self,), "sum", _back)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod([self.data.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    def reshape(self, *shape) -> "Tensor":
        a = self.data
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Tensor._result(a.reshape(shape), (self,), "reshape", lambda g: (g.reshape(a.shape),))

    def transpose(self, *axes) -> "Tensor":
        axes = axes or tuple(reversed(range(self.data.ndim)))
        inverse = np.argsort(axes)
        return Tensor._result(self.data.transpose(axes), (self,), "transpose", lambda g: (g.transpose(inverse),))

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def cumsum(self, axis: int = -1, exclusive: bool = False) -> "Tensor":
        """Running sum along `axis`; `exclusive` shifts it so element i sums 0..i-1."""
        a = self.data
        out = np.cumsum(a, axis=axis)
        if exclusive:
            out = out - a

        def _back(g):
            rev = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
            return (rev - g if exclusive else rev,)

        return Tensor._result(out, (self,), "cumsum", _back)

    # --- elementwise nonlinearities ---
    def relu(self) -> "Tensor":
        a = self.data
        return Tensor._result(np.maximum(a, 0.0), (self,), "relu", lambda g: (g * (a > 0.0),))

    def sigmoid(self) -> "Tensor":
        s = 0.5 * (1.0 + np.tanh(0.5 * self.data))
        return Tensor._result(s, (self,), "sigmoid", lambda g: (g * s * (1.0 - s),))

    def tanh(self) -> "Tensor":
        t = np.tanh(self.data)
        return Tensor._result(t, (self,), "tanh", lambda g: (g * (1.0 - t * t),))

    def softplus(self) -> "Tensor":
        a = self.data
        out = np.logaddexp(0.0, a)
        s = 0.5 * (1.0 + np.tanh(0.5 * a))
        return Tensor._result(out, (self,), "softplus", lambda g: (g * s,))

    def abs(self) -> "Tensor":
        a = self.data
        # subgradient at 0 is 0
        return Tensor._result(np.abs(a), (self,), "abs", lambda g: (g * np.sign(a),))

    def exp(self) -> "Tensor":
        e = np.exp(self.data)
        return Tensor._result(e, (self,), "exp", lambda g: (g * e,))

    def log(self) -> "Tensor":
        a = self.data
        return Tensor._result(np.log(a), (self,), "log", lambda g: (g / a,))

    def clamp_min(self, floor: float) -> "Tensor":
        a = self.data
        return Tensor._result(np.maximum(a, floor), (self,), "clamp_min", lambda g: (g * (a >= floor),))

    def clamp_max(self, ceiling: float) -> "Tensor":
        a = self.data
        return Tensor._result(np.minimum(a, ceiling), (self,), "clamp_max", lambda g: (g * (a <= ceiling),))

    # --- graph traversal ---
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        backward(self, grad)


def _topological_order(root: Tensor) -> list:
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, grad: Optional[np.ndarray] = None) -> None:
    """
    Propagates d(loss)/d(node) to every tensor on the tape that requires grad.
    Leaf gradients accumulate into `.grad`.

    Raises:
        NumericError: the tape holds a NaN/Inf value; the message names the op.
    """
    if grad is None:
        if loss.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {loss.data.shape}")
        grad = np.ones_like(loss.data)
    order = _topological_order(loss)
    for node in order:
        if not np.all(np.isfinite(node.data)):
            raise NumericError(f"non-finite value in forward tape at op '{node.op}'")
    loss.grad = np.asarray(grad, dtype=np.float64)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            if node.parents:
                # interior gradients are not needed once pushed
                node.grad = None


# --- functional forms ---

def relu(x: ArrayLike) -> Tensor:
    return Tensor.lift(x).relu()


def sigmoid(x: ArrayLike) -> Tensor:
    return Tensor.lift(x).sigmoid()


def tanh(x: ArrayLike) -> Tensor:
    return Tensor.lift(x).tanh()


def softplus(x: ArrayLike) -> Tensor:
    return Tensor.lift(x).softplus()


def exp(x: ArrayLike) -> Tensor:
    return Tensor.lift(x).exp()


def log(x: ArrayLike) -> Tensor:
    return Tensor.lift(x).log()


def absolute(x: ArrayLike) -> Tensor:
    return Tensor.lift(x).abs()


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    parts = [Tensor.lift(t) for t in tensors]
    sizes = [p.data.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def _back(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(parts)))

    return Tensor._result(np.concatenate([p.data for p in parts], axis=axis), parts, "concat", _back)


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    parts = [Tensor.lift(t) for t in tensors]

    def _back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return Tensor._result(np.stack([p.data for p in parts], axis=axis), parts, "stack", _back)


def minimum(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = Tensor.lift(a), Tensor.lift(b)
    pick_a = a.data <= b.data
    return Tensor._result(
        np.minimum(a.data, b.data), (a, b), "minimum", lambda g: (g * pick_a, g * ~pick_a)
    )


def where(condition: np.ndarray, a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = Tensor.lift(a), Tensor.lift(b)
    cond = np.asarray(condition, dtype=bool)
    return Tensor._result(
        np.where(cond, a.data, b.data), (a, b), "where", lambda g: (g * cond, g * ~cond)
    )


def shift2d(x: ArrayLike, dy: int, dx: int) -> Tensor:
    """out[y, x] = in[y - dy, x - dx] on the first two axes, zero outside."""
    x = Tensor.lift(x)
    return Tensor._result(_shift_array(x.data, dy, dx), (x,), "shift2d",
                          lambda g: (_shift_array(g, -dy, -dx),))


def _shift_array(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(a)
    h, w = a.shape[:2]
    if abs(dy) >= h or abs(dx) >= w:
        return out
    ys_dst = slice(max(dy, 0), h + min(dy, 0))
    xs_dst = slice(max(dx, 0), w + min(dx, 0))
    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
    out[ys_dst, xs_dst] = a[ys_src, xs_src]
    return out
