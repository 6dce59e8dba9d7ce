"""Reverse-mode autodiff over dense numpy arrays.

A ``Tensor`` wraps an ndarray; operations record a tape of parent links and
local backward closures. ``backward()`` walks the tape in reverse
topological order and accumulates gradients on every tensor created with
``requires_grad=True``. Single-threaded by design: gradient accumulation
order is the fixed topological order, so results are reproducible bit for
bit.
"""

import contextlib

import numpy as np

from ..errors import NoRecordedForward, ShapeMismatch

_GRAD_ENABLED = True
_CHECK_FINITE = False


def set_finite_checks(enabled: bool) -> None:
    """Assert finiteness of every op output/gradient (test instrumentation)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the context (inference passes)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def _check(arr):
    if _CHECK_FINITE and not np.all(np.isfinite(arr)):
        raise FloatingPointError("non-finite values in tensor op")
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _op(data, parents, backward_fn):
        _check(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            return Tensor(data, requires_grad=True, parents=tuple(parents), backward_fn=backward_fn)
        return Tensor(data)

    def backward(self, seed=None):
        """Accumulate gradients of ``self`` w.r.t. every requires-grad leaf.

        ``seed`` defaults to ones and must match ``self.shape``; scalars are
        the usual entry point (losses).
        """
        if self._backward_fn is None:
            raise NoRecordedForward("tensor has no recorded forward computation")
        if seed is None:
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=self.data.dtype)
            if seed.shape != self.data.shape:
                raise ShapeMismatch(f"seed shape {seed.shape} != tensor shape {self.data.shape}")

        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        grads = {id(self): seed}
        for node in reversed(order):
            grad_out = grads.pop(id(node), None)
            if grad_out is None:
                continue
            if node._backward_fn is None:
                node.grad = grad_out if node.grad is None else node.grad + grad_out
                continue
            parent_grads = node._backward_fn(grad_out)
            for parent, g in zip(node._parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                _check(g)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + g
                else:
                    grads[id(parent)] = g

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            if self.data.shape != other.data.shape:
                raise ShapeMismatch(f"add: {self.data.shape} vs {other.data.shape}")
            return Tensor._op(self.data + other.data, (self, other), lambda g: (g, g))
        return Tensor._op(self.data + other, (self,), lambda g: (g,))

    __radd__ = __add__

    def __neg__(self):
        return Tensor._op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        if isinstance(other, Tensor):
            if self.data.shape != other.data.shape:
                raise ShapeMismatch(f"sub: {self.data.shape} vs {other.data.shape}")
            return Tensor._op(self.data - other.data, (self, other), lambda g: (g, -g))
        return Tensor._op(self.data - other, (self,), lambda g: (g,))

    def __rsub__(self, other):
        return Tensor._op(other - self.data, (self,), lambda g: (-g,))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            if self.data.shape != other.data.shape:
                raise ShapeMismatch(f"mul: {self.data.shape} vs {other.data.shape}")
            a, b = self.data, other.data
            return Tensor._op(a * b, (self, other), lambda g: (g * b, g * a))
        return Tensor._op(self.data * other, (self,), lambda g: (g * other,))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Tensor._op(self.data / scalar, (self,), lambda g: (g / scalar,))

    def matmul(self, other: "Tensor") -> "Tensor":
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
        return Tensor._op(a @ b, (self, other), lambda g: (g @ b.T, a.T @ g))

    __matmul__ = matmul

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.data.shape
        return Tensor._op(self.data.reshape(shape), (self,), lambda g: (g.reshape(original),))

    def sum(self) -> "Tensor":
        shape = self.data.shape
        dt = self.data.dtype
        return Tensor._op(
            np.asarray(self.data.sum(), dtype=dt), (self,), lambda g: (np.broadcast_to(g, shape).astype(dt, copy=False),)
        )

    def mean(self) -> "Tensor":
        count = self.data.size
        shape = self.data.shape
        dt = self.data.dtype
        return Tensor._op(
            np.asarray(self.data.mean(dtype=dt), dtype=dt),
            (self,),
            lambda g: ((np.broadcast_to(g, shape) / count).astype(dt, copy=False),),
        )

    def clamp(self, lo: float, hi: float) -> "Tensor":
        out = np.clip(self.data, lo, hi)
        inside = ((self.data > lo) & (self.data < hi)).astype(self.data.dtype)
        # Clamped region propagates zero gradient.
        return Tensor._op(out, (self,), lambda g: (g * inside,))


def relu(x: Tensor) -> Tensor:
    mask = (x.data > 0).astype(x.data.dtype)
    return Tensor._op(x.data * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    factor = np.where(x.data > 0, x.data.dtype.type(1), x.data.dtype.type(slope))
    return Tensor._op(x.data * factor, (x,), lambda g: (g * factor,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor._op(out, (x,), lambda g: (g * (1 - out * out),))
