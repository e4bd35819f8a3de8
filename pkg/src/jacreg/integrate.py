"""Time stepping: RK4 (models and ODE ground truth), ETDRK4 (KS ground truth),
and splitting trajectories into training chunks."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._accel import njit, numba_enabled
from .dynamics import (
    COLLISION_RADIUS,
    DEFAULT_GRID,
    DEFAULT_RB,
    CollisionError,
    KsGrid,
    RigidBodyParams,
    SystemId,
    rhs,
)
from .numerics import NumericFailure, Var
from .numerics.fft import fft, ifft

log = logging.getLogger(__name__)


@dataclass
class Trajectory:
    """States sampled every ``dt`` starting at ``t0``; ``states`` is (steps, dim)."""

    states: np.ndarray
    dt: float
    t0: float = 0.0
    system: SystemId | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim != 2 or self.states.shape[0] < 2:
            raise ValueError("a trajectory needs at least two states of shape (dim,)")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def __len__(self):
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def subsample(self, every: int) -> "Trajectory":
        if every == 1:
            return self
        return Trajectory(self.states[::every], self.dt * every, self.t0, self.system)


@dataclass
class Chunk:
    """``rollout + 1 + lookahead`` consecutive states of one trajectory."""

    states: np.ndarray
    dt: float
    lookahead: int = 0

    @property
    def rollout(self) -> int:
        return self.states.shape[0] - 1 - self.lookahead


def rk4_step(f: Callable, x, dt: float):
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = f(x)
    k2 = f(x + (0.5 * dt) * k1)
    k3 = f(x + (0.5 * dt) * k2)
    k4 = f(x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not isinstance(out, Var) and not np.all(np.isfinite(out)):
        raise NumericFailure("RK4 step produced non-finite state")
    return out


def rollout(f: Callable, x0, dt: float, n_steps: int, differentiable: bool = False, system=None):
    """Integrate ``n_steps`` RK4 steps from ``x0``.

    Returns a :class:`Trajectory`, or with ``differentiable=True`` the list of
    ``n_steps + 1`` states as produced (graph nodes when ``f`` closes over
    ``Var`` parameters), so a loss built on them backpropagates through the
    solver.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    states = [x0]
    x = x0
    for step in range(1, n_steps + 1):
        try:
            x = rk4_step(f, x, dt)
        except NumericFailure as exc:
            raise NumericFailure(f"rollout diverged at step {step}", step=step) from exc
        if isinstance(x, Var) and not np.all(np.isfinite(x.value)):
            raise NumericFailure(f"rollout diverged at step {step}", step=step)
        states.append(x)
    if differentiable:
        return states
    return Trajectory(np.stack([np.asarray(s) for s in states]), dt, 0.0, system)


# -- compiled ground-truth kernels -------------------------------------------


@njit
def _tb_deriv(s, out):
    x, y = s[0], s[1]
    r2 = x * x + y * y
    inv_r3 = r2 ** -1.5
    out[0] = s[2]
    out[1] = s[3]
    out[2] = -x * inv_r3
    out[3] = -y * inv_r3


@njit
def _rb_deriv(s, inv_i, out):
    w1, w2, w3 = s[0] * inv_i[0], s[1] * inv_i[1], s[2] * inv_i[2]
    out[0] = -s[2] * w2 + s[1] * w3
    out[1] = s[2] * w1 - s[0] * w3
    out[2] = -s[1] * w1 + s[0] * w2


@njit
def _ode_rk4_numba(kind, x0, dt, n_steps, inv_i):
    batch, n = x0.shape
    out = np.empty((batch, n_steps + 1, n))
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    for b in range(batch):
        x = x0[b].copy()
        out[b, 0] = x
        for s in range(n_steps):
            if kind == 1:
                _tb_deriv(x, k1)
            else:
                _rb_deriv(x, inv_i, k1)
            for j in range(n):
                tmp[j] = x[j] + 0.5 * dt * k1[j]
            if kind == 1:
                _tb_deriv(tmp, k2)
            else:
                _rb_deriv(tmp, inv_i, k2)
            for j in range(n):
                tmp[j] = x[j] + 0.5 * dt * k2[j]
            if kind == 1:
                _tb_deriv(tmp, k3)
            else:
                _rb_deriv(tmp, inv_i, k3)
            for j in range(n):
                tmp[j] = x[j] + dt * k3[j]
            if kind == 1:
                _tb_deriv(tmp, k4)
            else:
                _rb_deriv(tmp, inv_i, k4)
            for j in range(n):
                x[j] = x[j] + (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            out[b, s + 1] = x
    return out


def _ode_rk4_numpy(sys, x0, dt, n_steps, rb):
    out = np.empty((x0.shape[0], n_steps + 1, x0.shape[1]))
    out[:, 0] = x0
    f = lambda u: rhs(sys, u, rb)  # noqa: E731
    x = x0
    for s in range(n_steps):
        x = rk4_step(f, x, dt)
        out[:, s + 1] = x
    return out


def integrate_ode(sys, x0, dt: float, n_steps: int, rb: RigidBodyParams = DEFAULT_RB) -> np.ndarray:
    """Batched RK4 ground truth for TB/RB; returns (batch, n_steps + 1, dim)."""
    sys = SystemId.parse(sys)
    if sys is SystemId.KuramotoSivashinsky:
        raise ValueError("use etdrk4_rollout for Kuramoto-Sivashinsky")
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    if numba_enabled():
        inv_i = np.array([1.0 / rb.I1, 1.0 / rb.I2, 1.0 / rb.I3])
        kind = 1 if sys is SystemId.TwoBody else 2
        out = _ode_rk4_numba(kind, np.ascontiguousarray(x0), float(dt), int(n_steps), inv_i)
    else:
        out = _ode_rk4_numpy(sys, x0, dt, n_steps, rb)
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.all(np.isfinite(out), axis=(1, 2))))
        raise NumericFailure(f"ground-truth trajectory {bad} became non-finite", where=str(bad))
    if sys is SystemId.TwoBody:
        r = np.hypot(out[..., 0], out[..., 1])
        if np.any(r < COLLISION_RADIUS):
            raise CollisionError("ground-truth two-body trajectory hit the origin")
    return out


# -- ETDRK4 for Kuramoto-Sivashinsky ----------------------------------------


def etdrk4_coefficients(lin: np.ndarray, h: float, n_contour: int = 64):
    """Exponential integrator weights, evaluated by contour averaging so that
    modes with ``h*lin`` near zero stay accurate."""
    E = np.exp(h * lin)
    E2 = np.exp(h * lin / 2.0)
    r = np.exp(1j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    LR = h * lin[:, None] + r[None, :]
    Q = h * np.real(np.mean((np.exp(LR / 2.0) - 1.0) / LR, axis=1))
    f1 = h * np.real(np.mean((-4.0 - LR + np.exp(LR) * (4.0 - 3.0 * LR + LR**2)) / LR**3, axis=1))
    f2 = h * np.real(np.mean((2.0 + LR + np.exp(LR) * (-2.0 + LR)) / LR**3, axis=1))
    f3 = h * np.real(np.mean((-4.0 - 3.0 * LR - LR**2 + np.exp(LR) * (4.0 - LR)) / LR**3, axis=1))
    return E, E2, Q, f1, f2, f3


def etdrk4_rollout(u0, grid: KsGrid = DEFAULT_GRID, dt: float = 0.2, n_steps: int = 1, substeps: int = 4) -> np.ndarray:
    """Integrate KS with ETDRK4, storing every ``dt``; returns (.., n_steps + 1, n).

    ``u0`` may carry leading batch axes. Each stored step is ``substeps``
    internal steps of size ``dt / substeps``.
    """
    u0 = np.asarray(u0, dtype=np.float64)
    if u0.shape[-1] != grid.n_points:
        raise ValueError("state length does not match the grid")
    if n_steps < 1 or substeps < 1:
        raise ValueError("n_steps and substeps must be >= 1")
    h = dt / substeps
    E, E2, Q, f1, f2, f3 = etdrk4_coefficients(grid.linear_multiplier, h)
    g = -0.5 * grid.ik

    def nonlin(v):
        u = np.real(ifft(v))
        return g * fft(u * u)

    out = np.empty(u0.shape[:-1] + (n_steps + 1, grid.n_points))
    out[..., 0, :] = u0
    v = fft(u0)
    for step in range(1, n_steps + 1):
        for _ in range(substeps):
            Nv = nonlin(v)
            a = E2 * v + Q * Nv
            Na = nonlin(a)
            b = E2 * v + Q * Na
            Nb = nonlin(b)
            c = E2 * a + Q * (2.0 * Nb - Nv)
            Nc = nonlin(c)
            v = E * v + Nv * f1 + 2.0 * (Na + Nb) * f2 + Nc * f3
        if not np.all(np.isfinite(v)):
            raise NumericFailure(f"ETDRK4 produced non-finite coefficients at step {step}", step=step)
        out[..., step, :] = np.real(ifft(v))
    return out


# -- chunking ----------------------------------------------------------------


def chunk_trajectories(trajs: Sequence[Trajectory], n: int, lookahead: int = 0) -> list[Chunk]:
    """Non-overlapping windows of ``n + 1`` states at offsets 0, n, 2n, ...

    ``lookahead`` extra states past each window are attached (they overlap the
    next window); windows whose lookahead would run off the end are dropped.
    """
    if n < 1:
        raise ValueError("rollout length must be >= 1")
    width = n + 1 + lookahead
    chunks = []
    for traj in trajs:
        states = traj.states
        if len(states) < width:
            log.warning("trajectory with %d states is shorter than a chunk (%d); skipped", len(states), width)
            continue
        for start in range(0, len(states) - width + 1, n):
            chunks.append(Chunk(states[start:start + width].copy(), traj.dt, lookahead))
    return chunks


def stack_chunks(chunks: Sequence[Chunk]) -> np.ndarray:
    """(n_chunks, window, dim) array for batched losses."""
    if not chunks:
        raise ValueError("no chunks to stack")
    return np.stack([c.states for c in chunks])
