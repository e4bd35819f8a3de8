"""Right-hand sides, conserved quantities and exact JVPs of the benchmark systems.

All right-hand sides act on the last axis and accept plain arrays, graph nodes
or :class:`~jacreg.numerics.Dual` values, so ``true_jvp`` is simply dual-number
propagation through the same code that generates the data.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .numerics import Dual, jvp, linear_map, stack, value_of
from .numerics.fft import fft, ifft


class SystemId(enum.Enum):
    TwoBody = 1
    RigidBody = 2
    KuramotoSivashinsky = 3

    @property
    def dim(self) -> int:
        return {SystemId.TwoBody: 4, SystemId.RigidBody: 3, SystemId.KuramotoSivashinsky: 256}[self]

    @property
    def short(self) -> str:
        return {SystemId.TwoBody: "tb", SystemId.RigidBody: "rb", SystemId.KuramotoSivashinsky: "ks"}[self]

    @classmethod
    def parse(cls, name) -> "SystemId":
        if isinstance(name, SystemId):
            return name
        key = str(name).strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "tb": cls.TwoBody, "twobody": cls.TwoBody,
            "rb": cls.RigidBody, "rigidbody": cls.RigidBody,
            "ks": cls.KuramotoSivashinsky, "kuramotosivashinsky": cls.KuramotoSivashinsky,
        }
        if key not in aliases:
            raise ValueError(f"unknown system {name!r}")
        return aliases[key]


class CollisionError(ValueError):
    """Two-body state at (or numerically at) the attracting centre."""


COLLISION_RADIUS = 1e-12


@dataclass(frozen=True)
class RigidBodyParams:
    I1: float = 1.6
    I2: float = 1.0
    I3: float = 2.0 / 3.0

    def __post_init__(self):
        if min(self.I1, self.I2, self.I3) <= 0:
            raise ValueError("moments of inertia must be strictly positive")


@dataclass(frozen=True)
class KsGrid:
    n_points: int = 256
    length: float = 64.0
    k: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n_points
        if n < 2 or n & (n - 1):
            raise ValueError("n_points must be a power of two")
        m = np.fft.fftfreq(n, d=1.0 / n)  # 0, 1, ..., n/2-1, -n/2, ..., -1
        object.__setattr__(self, "k", 2.0 * np.pi * m / self.length)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n_points) * (self.length / self.n_points)

    @property
    def ik(self) -> np.ndarray:
        """First-derivative multiplier; the Nyquist mode is zeroed to keep it real."""
        mult = 1j * self.k
        mult[self.n_points // 2] = 0.0
        return mult

    @property
    def linear_multiplier(self) -> np.ndarray:
        """Fourier symbol of ``-d2/dx2 - d4/dx4``."""
        return self.k**2 - self.k**4


DEFAULT_RB = RigidBodyParams()
DEFAULT_GRID = KsGrid()
# systems whose exact Jacobian-vector product is available for the AD regulariser
TRUE_JVP_SYSTEMS = frozenset(SystemId)


def _spectral(mult: np.ndarray):
    def fn(u):
        return np.real(ifft(mult * fft(u)))

    def adjoint(g):
        return np.real(ifft(np.conj(mult) * fft(g)))

    return fn, adjoint


def spectral_apply(u, mult: np.ndarray):
    fn, adjoint = _spectral(mult)
    return linear_map(u, fn, adjoint)


def _check_radius(u):
    uv = value_of(u.value if isinstance(u, Dual) else u)
    r = np.sqrt(uv[..., 0] ** 2 + uv[..., 1] ** 2)
    if np.any(r < COLLISION_RADIUS):
        raise CollisionError("two-body state at the origin (r < 1e-12)")


def tb_rhs(u):
    _check_radius(u)
    x, y, vx, vy = u[..., 0], u[..., 1], u[..., 2], u[..., 3]
    inv_r3 = (x * x + y * y) ** -1.5
    return stack([vx, vy, -x * inv_r3, -y * inv_r3], axis=-1)


def rb_rhs(u, p: RigidBodyParams = DEFAULT_RB):
    y1, y2, y3 = u[..., 0], u[..., 1], u[..., 2]
    w1, w2, w3 = y1 * (1.0 / p.I1), y2 * (1.0 / p.I2), y3 * (1.0 / p.I3)
    return stack([-y3 * w2 + y2 * w3, y3 * w1 - y1 * w3, -y2 * w1 + y1 * w2], axis=-1)


def ks_rhs(u, grid: KsGrid = DEFAULT_GRID):
    if np.shape(value_of(u.value if isinstance(u, Dual) else u))[-1] != grid.n_points:
        raise ValueError("state length does not match the grid")
    lin = spectral_apply(u, grid.linear_multiplier)
    ux = spectral_apply(u, grid.ik)
    return lin - u * ux


def rhs(sys: SystemId, u, rb: RigidBodyParams = DEFAULT_RB, grid: KsGrid = DEFAULT_GRID):
    sys = SystemId.parse(sys)
    if sys is SystemId.TwoBody:
        return tb_rhs(u)
    if sys is SystemId.RigidBody:
        return rb_rhs(u, rb)
    return ks_rhs(u, grid)


def rhs_fn(sys: SystemId, rb: RigidBodyParams = DEFAULT_RB, grid: KsGrid = DEFAULT_GRID):
    sys = SystemId.parse(sys)
    return lambda u: rhs(sys, u, rb, grid)


def conserved(sys: SystemId, u, grid: KsGrid = DEFAULT_GRID) -> np.ndarray:
    """Angular momentum (TB), Casimir (RB) or spatial integral (KS)."""
    sys = SystemId.parse(sys)
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != sys.dim:
        raise ValueError(f"{sys.name} state must have length {sys.dim}")
    if sys is SystemId.TwoBody:
        return u[..., 0] * u[..., 3] - u[..., 2] * u[..., 1]
    if sys is SystemId.RigidBody:
        return 0.5 * np.sum(u * u, axis=-1)
    return (grid.length / grid.n_points) * np.sum(u, axis=-1)


def true_jvp(sys: SystemId, u, v, rb: RigidBodyParams = DEFAULT_RB, grid: KsGrid = DEFAULT_GRID):
    """``J_F(u) @ v`` for the true dynamics, exact to roundoff."""
    _, tangent = jvp(rhs_fn(sys, rb, grid), u, v)
    return tangent
