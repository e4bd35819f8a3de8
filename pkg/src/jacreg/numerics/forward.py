"""Forward-mode differentiation with dual numbers.

``Dual(value, tangent)`` carries a primal value and a tangent through a
computation. The components may be plain ndarrays or :class:`Var` nodes; in the
latter case every tangent operation is recorded on the reverse-mode graph, which
is how gradients of JVP-based losses are obtained.

Functions that should be differentiable in both modes are written against the
small set of dispatching helpers below (``relu``, ``stack``, ``sqrt``...)
instead of calling numpy directly.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import NumericFailure, Var, value_of


def _zero_like(a):
    return np.zeros_like(value_of(a))


class Dual:
    """Primal value plus tangent; shapes always agree."""

    __slots__ = ("value", "tangent")
    __array_ufunc__ = None

    def __init__(self, value, tangent):
        if np.shape(value_of(value)) != np.shape(value_of(tangent)):
            raise ValueError(
                f"dual shape mismatch: value {np.shape(value_of(value))} vs tangent {np.shape(value_of(tangent))}"
            )
        self.value = value
        self.tangent = tangent

    def __repr__(self):
        return f"Dual(shape={self.shape})"

    @property
    def shape(self):
        return np.shape(value_of(self.value))

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.tangent + other.tangent)
        return Dual(self.value + other, self.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.tangent - other.tangent)
        return Dual(self.value - other, self.tangent)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.tangent)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value * other.value, self.tangent * other.value + self.value * other.tangent)
        return Dual(self.value * other, self.tangent * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.value / other.value
            return Dual(q, (self.tangent - q * other.tangent) / other.value)
        return Dual(self.value / other, self.tangent / other)

    def __rtruediv__(self, other):
        q = other / self.value
        return Dual(q, -q * self.tangent / self.value)

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __pow__(self, exponent):
        exponent = float(exponent)
        v = self.value
        return Dual(_pow(v, exponent), exponent * _pow(v, exponent - 1.0) * self.tangent)

    def __getitem__(self, idx):
        return Dual(self.value[idx], self.tangent[idx])

    def sum(self, axis=None):
        return Dual(vsum(self.value, axis), vsum(self.tangent, axis))


def _pow(a, exponent):
    if isinstance(a, Var):
        return ad.power(a, exponent)
    return np.asarray(a, dtype=np.float64) ** exponent


def vsum(a, axis=None):
    if isinstance(a, (Var, Dual)):
        return a.sum(axis)
    return np.sum(a, axis=axis)


def relu_mask(a) -> np.ndarray:
    """1.0 where the pre-activation is strictly positive, else 0.0."""
    v = a.value if isinstance(a, Dual) else a
    return (value_of(v) > 0.0).astype(np.float64)


def relu(a):
    mask = relu_mask(a)
    if isinstance(a, Dual):
        return Dual(a.value * mask, a.tangent * mask)
    if isinstance(a, Var):
        return a * mask
    return np.asarray(a) * mask


def sqrt(a):
    if isinstance(a, Dual):
        s = sqrt(a.value)
        return Dual(s, a.tangent / (2.0 * s))
    if isinstance(a, Var):
        return ad.power(a, 0.5)
    return np.sqrt(a)


def stack(items, axis: int = -1):
    items = list(items)
    if any(isinstance(x, Dual) for x in items):
        vals = [x.value if isinstance(x, Dual) else x for x in items]
        tans = [x.tangent if isinstance(x, Dual) else _zero_like(x) for x in items]
        return Dual(stack(vals, axis), stack(tans, axis))
    if any(isinstance(x, Var) for x in items):
        return ad.stack(items, axis)
    return np.stack([np.asarray(x, dtype=np.float64) for x in items], axis=axis)


def linear(x, W, b=None):
    """``x @ W.T + b`` for arrays, graph nodes or duals in ``x``."""
    if isinstance(x, Dual):
        return Dual(linear(x.value, W, b), linear(x.tangent, W))
    if isinstance(x, Var) or isinstance(W, Var) or isinstance(b, Var):
        return ad.linear(x, W, b)
    out = np.asarray(x) @ np.asarray(W).T
    return out if b is None else out + b


def linear_map(a, fn: Callable, adjoint: Callable):
    """Apply a fixed linear operator; tangents pass through the same operator."""
    if isinstance(a, Dual):
        return Dual(linear_map(a.value, fn, adjoint), linear_map(a.tangent, fn, adjoint))
    if isinstance(a, Var):
        return ad.apply_linear_map(a, fn, adjoint)
    return fn(np.asarray(a, dtype=np.float64))


def _check_tangent(t, what):
    tv = value_of(t)
    if not np.all(np.isfinite(tv)):
        raise NumericFailure(f"non-finite {what} in jvp", where=what)


def jvp(f: Callable, x, v):
    """Return ``(f(x), J_f(x) @ v)`` by propagating a dual number through ``f``.

    ``x`` and ``v`` must share a shape; a leading batch axis is allowed as long
    as ``f`` acts row-wise.
    """
    xv, vv = np.shape(value_of(x)), np.shape(value_of(v))
    if xv != vv:
        raise ValueError(f"jvp: point has shape {xv} but direction has shape {vv}")
    out = f(Dual(x, v))
    if isinstance(out, Dual):
        val, tan = out.value, out.tangent
    else:
        val, tan = out, _zero_like(out)
    _check_tangent(val, "value")
    _check_tangent(tan, "tangent")
    return val, tan


def full_jacobian(f: Callable, x) -> np.ndarray:
    """Assemble the Jacobian of ``f`` at a single point, one JVP per column."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("full_jacobian expects a single 1-D point")
    n = x.shape[0]
    eye = np.eye(n)
    # all basis directions at once: the batch axis carries the column index
    _, cols = jvp(f, np.broadcast_to(x, (n, n)).copy(), eye)
    return np.asarray(value_of(cols)).T.copy()
