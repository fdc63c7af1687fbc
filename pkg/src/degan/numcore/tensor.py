"""Dense float64 tensors with reverse-mode differentiation.

Every op that touches a tensor with ``requires_grad`` records its parents and
a closure that pushes the output gradient back to them. ``backward`` sorts the
recorded graph topologically and runs the closures in reverse.
"""
from __future__ import annotations

import contextlib

import numpy as np

from ..errors import InvalidArgument

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # sum out axes that were broadcast to reach grad.shape
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), op: str = ""):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = None
        self.op = op

    # -- descriptors -----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_error(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self):
        return self.shape[0]

    # -- graph construction ---------------------------------------------
    @staticmethod
    def _make(data, parents, backward, op):
        """Wrap an op result; attach ``backward`` only if some parent needs grad."""
        needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=needs, _parents=parents if needs else (), op=op)
        if needs:
            out._backward = backward
        return out

    def _accum(self, g: np.ndarray):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable tensor."""
        if grad is None:
            if self.data.size != 1:
                raise InvalidArgument(f"backward needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _topological(self)
        self._accum(np.asarray(grad, dtype=np.float64).reshape(self.shape))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # interior grads are not needed once propagated
                if node._parents:
                    node.grad = None if node is not self else node.grad

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            a._accum(_unbroadcast(g, a.shape))
            b._accum(_unbroadcast(g, b.shape))

        return Tensor._make(a.data + b.data, (a, b), bw, "add")

    __radd__ = __add__

    def __neg__(self):
        a = self

        def bw(g):
            a._accum(-g)

        return Tensor._make(-a.data, (a,), bw, "neg")

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            a._accum(_unbroadcast(g * b.data, a.shape))
            b._accum(_unbroadcast(g * a.data, b.shape))

        return Tensor._make(a.data * b.data, (a, b), bw, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            a._accum(_unbroadcast(g / b.data, a.shape))
            b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._make(a.data / b.data, (a, b), bw, "div")

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise InvalidArgument("only scalar exponents are supported")
        a = self

        def bw(g):
            a._accum(g * p * a.data ** (p - 1))

        return Tensor._make(a.data ** p, (a,), bw, "pow")

    def __matmul__(self, other):
        from .functional import matmul

        return matmul(self, other)

    # -- reductions and views -------------------------------------------
    def sum(self, axis=None, keepdims=False):
        a = self

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accum(np.broadcast_to(g, a.shape))

        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw, "sum")

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self

        def bw(g):
            a._accum(g.reshape(a.shape))

        return Tensor._make(a.data.reshape(shape), (a,), bw, "reshape")

    def __getitem__(self, idx):
        a = self

        def bw(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a._accum(full)

        return Tensor._make(a.data[idx], (a,), bw, "getitem")

    def exp(self):
        a = self
        out = np.exp(a.data)

        def bw(g):
            a._accum(g * out)

        return Tensor._make(out, (a,), bw, "exp")

    def log(self):
        a = self

        def bw(g):
            a._accum(g / a.data)

        return Tensor._make(np.log(a.data), (a,), bw, "log")

    def sqrt(self):
        a = self
        out = np.sqrt(a.data)

        def bw(g):
            a._accum(g * 0.5 / out)

        return Tensor._make(out, (a,), bw, "sqrt")

    def clip(self, lo, hi):
        a = self

        def bw(g):
            a._accum(g * ((a.data >= lo) & (a.data <= hi)))

        return Tensor._make(np.clip(a.data, lo, hi), (a,), bw, "clip")


def _scalar_error(t):
    raise InvalidArgument(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors, axis=0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise InvalidArgument("concat needs at least one tensor")
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        for t, part in zip(ts, np.split(g, bounds, axis=axis)):
            t._accum(part)

    return Tensor._make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), bw, "concat")


def _topological(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params=()) -> list:
    """Run backprop from ``loss`` and return gradients for ``params``.

    Parameters not reachable from the loss get a zero gradient.
    """
    if loss.data.size != 1:
        raise InvalidArgument(f"backward needs a scalar loss, got shape {loss.shape}")
    for p in params:
        p.grad = None
    loss.backward()
    grads = []
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        grads.append(p.grad)
    return grads
