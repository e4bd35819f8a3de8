"""Array-valued reverse-mode differentiation.

A :class:`Var` wraps a float64 ndarray and records how it was produced. Calling
:meth:`Var.backward` on a scalar result walks the recorded graph in reverse
topological order and accumulates ``.grad`` on every node.

Forward-mode tangents (see :mod:`jacreg.numerics.forward`) are built out of the
same operations, so a tangent computed from ``Var`` parameters is itself part of
the graph and can be differentiated again.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

import numpy as np


class NumericFailure(FloatingPointError):
    """A computation produced NaN or Inf where a finite value was required."""

    def __init__(self, message: str, where: str | None = None, step: int | None = None):
        super().__init__(message)
        self.where = where
        self.step = step


def check_finite(a, what: str = "value") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NumericFailure(f"non-finite entries in {what}", where=what)
    return a


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    ndim_extra = g.ndim - len(shape)
    if ndim_extra > 0:
        g = g.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Var:
    """A node in the reverse-mode graph."""

    __slots__ = ("value", "grad", "_parents", "_backward", "name")
    __array_ufunc__ = None  # ndarray <op> Var defers to Var

    def __init__(self, value, parents: tuple = (), backward: Callable | None = None, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._backward = backward
        self.name = name

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.value.shape})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def _accumulate(self, g):
        # gradients are never modified in place, so sharing the incoming array is safe
        if self.grad is None:
            self.grad = np.asarray(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def backward(self):
        if self.value.size != 1:
            raise ValueError("backward() needs a scalar output")
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
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
                if isinstance(p, Var) and id(p) not in seen:
                    stack.append((p, False))
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

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
        out = Var(-self.value, (self,))
        out._backward = lambda g: self._accumulate(-g)
        return out

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return vsum(self, axis)


def value_of(a):
    return a.value if isinstance(a, Var) else np.asarray(a, dtype=np.float64)


def _binary(a, b, fwd, da, db):
    av, bv = value_of(a), value_of(b)
    out_v = fwd(av, bv)
    parents = tuple(x for x in (a, b) if isinstance(x, Var))
    out = Var(out_v, parents)

    def backward(g):
        if isinstance(a, Var):
            a._accumulate(_unbroadcast(da(g, av, bv), av.shape))
        if isinstance(b, Var):
            b._accumulate(_unbroadcast(db(g, av, bv), bv.shape))

    out._backward = backward
    return out


def add(a, b):
    return _binary(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b):
    return _binary(
        a, b, np.divide,
        lambda g, x, y: g / y,
        lambda g, x, y: -g * x / (y * y),
    )


def power(a: Var, exponent: float) -> Var:
    exponent = float(exponent)
    av = a.value
    out = Var(av**exponent, (a,))
    out._backward = lambda g: a._accumulate(g * exponent * av ** (exponent - 1.0))
    return out


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)


def getitem(a: Var, idx) -> Var:
    out = Var(a.value[idx], (a,))

    def backward(g):
        full = np.zeros_like(a.value)
        if _is_basic_index(idx):
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        a._accumulate(full)

    out._backward = backward
    return out


def vsum(a: Var, axis=None) -> Var:
    av = a.value
    out = Var(av.sum(axis=axis), (a,))

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, av.shape))

    out._backward = backward
    return out


def stack(items: Iterable, axis: int = -1) -> Var:
    items = list(items)
    vals = [value_of(x) for x in items]
    out_v = np.stack(vals, axis=axis)
    out = Var(out_v, tuple(x for x in items if isinstance(x, Var)))
    ax = axis if axis >= 0 else out_v.ndim + axis

    def backward(g):
        for k, x in enumerate(items):
            if isinstance(x, Var):
                x._accumulate(np.take(g, k, axis=ax))

    out._backward = backward
    return out


def linear(x, W, b=None):
    """``x @ W.T + b`` over the last axis of ``x``; ``W`` has shape (out, in)."""
    xv, Wv = value_of(x), value_of(W)
    out_v = xv @ Wv.T
    if b is not None:
        out_v = out_v + value_of(b)
    out = Var(out_v, tuple(t for t in (x, W, b) if isinstance(t, Var)))

    def backward(g):
        if isinstance(x, Var):
            x._accumulate(g @ Wv)
        if isinstance(W, Var):
            g2 = g.reshape(-1, g.shape[-1])
            x2 = xv.reshape(-1, xv.shape[-1])
            W._accumulate(g2.T @ x2)
        if isinstance(b, Var):
            b._accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))

    out._backward = backward
    return out


def apply_linear_map(a: Var, fn: Callable, adjoint: Callable) -> Var:
    """Apply a fixed linear map with a known adjoint (e.g. spectral derivatives)."""
    out = Var(fn(a.value), (a,))
    out._backward = lambda g: a._accumulate(adjoint(g))
    return out


def grad(loss_fn: Callable[[Mapping[str, Var]], Var], params: Mapping[str, np.ndarray]):
    """Return ``(loss value, {name: dloss/dparam})``.

    ``loss_fn`` receives the parameters wrapped as graph leaves and must return a
    scalar ``Var`` (or a constant, in which case every gradient is zero).
    """
    leaves = {k: Var(np.asarray(v, dtype=np.float64), name=k) for k, v in params.items()}
    loss = loss_fn(leaves)
    if not isinstance(loss, Var):
        value = float(np.asarray(loss))
        if not np.isfinite(value):
            raise NumericFailure("loss is not finite", where="loss")
        return value, {k: np.zeros_like(v.value) for k, v in leaves.items()}
    value = float(loss.value)
    if not np.isfinite(value):
        raise NumericFailure("loss is not finite", where="loss")
    loss.backward()
    grads = {}
    for k, leaf in leaves.items():
        g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        if not np.all(np.isfinite(g)):
            raise NumericFailure(f"non-finite gradient for parameter {k!r}", where=k)
        grads[k] = np.array(g, copy=True)
    return value, grads
