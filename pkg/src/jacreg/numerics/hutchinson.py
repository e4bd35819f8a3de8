"""Standard-normal probe directions and the Hutchinson Frobenius-norm estimate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import value_of

_MASK64 = (1 << 64) - 1


def _philox_uniforms(seed: int, block: int, count: int) -> np.ndarray:
    key = np.array([seed & _MASK64, block & _MASK64], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.random(count)


def box_muller(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Map uniform pairs on [0,1) to standard normals (both outputs kept)."""
    r = np.sqrt(-2.0 * np.log1p(-u1))  # 1-u1 lies in (0, 1]
    theta = 2.0 * np.pi * u2
    return np.concatenate([r * np.cos(theta), r * np.sin(theta)])


@dataclass
class DirectionSampler:
    """Reproducible stream of standard-normal directions in R^dim.

    Uniforms come from a Philox counter generator keyed by ``(seed, block)``;
    each call to :meth:`draw` consumes one block, so the sequence of draws is a
    pure function of the seed.
    """

    seed: int
    dim: int
    distribution: str = "standard-normal"
    _block: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.distribution != "standard-normal":
            raise ValueError(f"unsupported distribution {self.distribution!r}")

    def directions(self, block: int, count: int) -> np.ndarray:
        """The ``count`` directions of a given block, without advancing."""
        total = count * self.dim
        half = (total + 1) // 2
        u = _philox_uniforms(self.seed, block, 2 * half)
        z = box_muller(u[:half], u[half:])
        return z[:total].reshape(count, self.dim)

    def draw(self, count: int) -> np.ndarray:
        out = self.directions(self._block, count)
        self._block += 1
        return out

    def reset(self):
        self._block = 0


def frobenius_sq_hutchinson(jvp_fn: Callable, sampler: DirectionSampler, n_dirs: int) -> float:
    """Mean of ``||jvp_fn(v)||^2`` over ``n_dirs`` probes; unbiased for ``||J||_F^2``.

    ``jvp_fn`` maps a (k, dim) stack of directions to the (k, m) stack of
    Jacobian-vector products.
    """
    if n_dirs < 1:
        raise ValueError("n_dirs must be >= 1")
    dirs = sampler.draw(n_dirs)
    jv = np.asarray(value_of(jvp_fn(dirs)))
    return float(np.sum(jv * jv) / n_dirs)


def frobenius_sq(mat) -> float:
    m = np.asarray(mat, dtype=np.float64)
    return float(np.sum(m * m))
