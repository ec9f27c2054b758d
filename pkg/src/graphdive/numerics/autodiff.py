"""Reverse-mode differentiation over float64 NumPy arrays.

Each ``Tensor`` remembers its parents and a closure mapping the incoming
adjoint to the parents' adjoints. Nodes built only from constants carry no
closure, so no-grad evaluation (inference, E-step) pays nothing for the tape.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from graphdive import kernels

# smallest positive double; keeps sigmoid strictly inside (0, 1] at x << 0
_TINY = np.nextafter(0.0, 1.0)


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    __array_priority__ = 100

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward: Callable | None = None,
        name: str | None = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward = backward
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.value)

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    """Wrap ``x`` with gradients blocked (a stop-gradient on tensors)."""
    return Tensor(x.value if isinstance(x, Tensor) else x)


def _node(value, parents: Iterable[Tensor], backward: Callable) -> Tensor:
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(value, True, parents, backward)
    return Tensor(value)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return _node(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    out = av / bv
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return _node(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.value > 0
    return _node(np.where(pos, a.value, 0.0), (a,), lambda g: (g * pos,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return _node(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    av = a.value
    return _node(np.log(av), (a,), lambda g: (g / av,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.value)
    return _node(out, (a,), lambda g: (g * 0.5 / out,))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    av = a.value
    if p == 0:
        return _node(np.ones_like(av), (a,), lambda g: (np.zeros_like(av),))
    return _node(av**p, (a,), lambda g: (g * p * av ** (p - 1),))


def sigmoid_value(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(under="ignore"):
        e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.maximum(out, _TINY)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = sigmoid_value(a.value)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    av = a.value
    inside = (av > lo) & (av < hi)
    return _node(np.clip(av, lo, hi), (a,), lambda g: (g * inside,))


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(a.value.sum(axis=axis, keepdims=keepdims), (a,), back)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.value.size if axis is None else a.shape[axis]
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _node(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def index(a, key) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, key, g)
        return (out,)

    return _node(a.value[key], (a,), back)


def logsumexp(a, axis=-1, keepdims=False) -> Tensor:
    a = as_tensor(a)
    av = a.value
    m = np.max(av, axis=axis, keepdims=True)
    s = np.sum(np.exp(av - m), axis=axis, keepdims=True)
    out_k = m + np.log(s)
    soft = np.exp(av - out_k)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    out = out_k if keepdims else np.squeeze(out_k, axis=axis)
    return _node(out, (a,), back)


def log_softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    av = a.value
    m = np.max(av, axis=axis, keepdims=True)
    shifted = av - m
    out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    soft = np.exp(out)
    return _node(
        out, (a,), lambda g: (g - soft * np.sum(g, axis=axis, keepdims=True),)
    )


def softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    av = a.value
    e = np.exp(av - np.max(av, axis=axis, keepdims=True))
    out = e / np.sum(e, axis=axis, keepdims=True)
    return _node(
        out, (a,), lambda g: (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)
    )


def gather(a, idx: np.ndarray) -> Tensor:
    """Rows ``a[idx]``; the adjoint scatters back with ``segment_sum``."""
    a = as_tensor(a)
    n = a.shape[0]
    return _node(
        kernels.gather_rows(a.value, idx),
        (a,),
        lambda g: (kernels.segment_sum(g, idx, n),),
    )


def segment_sum(a, idx: np.ndarray, n: int) -> Tensor:
    """``out[i] = sum of a[e] over e with idx[e] == i``."""
    a = as_tensor(a)
    return _node(
        kernels.segment_sum(a.value, idx, n),
        (a,),
        lambda g: (kernels.gather_rows(g, idx),),
    )


def backward(loss: Tensor, store=None) -> None:
    """Fill ``.grad`` on every leaf reachable from ``loss``.

    With a :class:`ParamStore`, its gradient accumulators are overwritten
    with d loss / d param (zeros for parameters the loss does not touch).
    """
    if loss.value.size != 1:
        raise ValueError("backward() needs a scalar loss")
    if not np.isfinite(loss.value):
        raise FloatingPointError(f"non-finite loss {float(loss.value)}")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg

    if store is not None:
        store.collect()
