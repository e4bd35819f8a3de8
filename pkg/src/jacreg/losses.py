"""Training objectives: rollout trajectory loss and the two Jacobian regularisers.

Every loss takes a batch of chunks shaped (chunks, window, dim) and returns the
sum over chunks. With ``MlpParams`` holding graph leaves the result is a scalar
``Var``; with plain arrays it is a float64 scalar.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dynamics import DEFAULT_GRID, DEFAULT_RB, KsGrid, RigidBodyParams, SystemId, true_jvp
from .integrate import rk4_step
from .model import MlpParams, apply_model, apply_model_jvp
from .numerics import value_of, vsum


class RegMode(str, enum.Enum):
    none = "none"
    ad = "ad"
    fd = "fd"

    @classmethod
    def parse(cls, mode) -> "RegMode":
        try:
            return cls(str(getattr(mode, "value", mode)).lower())
        except ValueError:
            raise ValueError(f"unknown regularisation mode {mode!r}; expected none, ad or fd") from None


class DegeneratePairError(ValueError):
    """Consecutive data states coincide, so the FD quotient is undefined."""


FD_MIN_DENOMINATOR = 1e-14


@dataclass(frozen=True)
class LossBreakdown:
    traj: float
    reg: float
    lam: float
    total: float

    def __post_init__(self):
        for k in ("traj", "reg", "total"):
            if not np.isfinite(getattr(self, k)):
                raise ValueError(f"loss component {k} is not finite")


def _sq(x):
    return vsum(x * x)


def traj_loss(p: MlpParams, states, dt: float, rollout: int | None = None):
    """Sum over chunks and steps of ``||x(t_i) - x_theta(t_i)||^2``.

    The model is started from each chunk's first state and stepped ``rollout``
    times with RK4 (default: window length minus one).
    """
    states = np.asarray(states, dtype=np.float64)
    n = states.shape[-2] - 1 if rollout is None else rollout
    if n < 1 or n + 1 > states.shape[-2]:
        raise ValueError("chunk is too short for the requested rollout")
    f = lambda x: apply_model(p, x)  # noqa: E731
    x = states[..., 0, :]
    total = 0.0
    for i in range(1, n + 1):
        x = rk4_step(f, x, dt)
        total = total + _sq(x - states[..., i, :])
    return total


def loss_ad(p: MlpParams, sys: SystemId, x, dirs, rb: RigidBodyParams = DEFAULT_RB, grid: KsGrid = DEFAULT_GRID):
    """``(1/V) sum_points sum_i ||J_theta v_i - J_F v_i||^2`` at the given points.

    ``x`` is (..., dim); ``dirs`` is (V, dim) and shared by every point.
    """
    x = np.asarray(x, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    if dirs.ndim != 2 or dirs.shape[1] != x.shape[-1]:
        raise ValueError("dirs must be (V, dim)")
    V = dirs.shape[0]
    pts = x.reshape(-1, 1, x.shape[-1])
    # the model's primal path is shared by all V directions via broadcasting
    model_t = apply_model_jvp(p, pts, dirs[None, :, :])
    X = np.broadcast_to(pts, (pts.shape[0], V, x.shape[-1])).copy()
    D = np.broadcast_to(dirs, X.shape).copy()
    residual = model_t - true_jvp(sys, X, D, rb, grid)
    return _sq(residual) * (1.0 / V)


def loss_fd(p: MlpParams, x_t, x_t1, x_t2, dt: float):
    """Unsupervised finite-difference regulariser, summed over points.

    Per point: ``||(F_theta(x1) - F_theta(x0)) - (x2 - 2 x1 + x0)/dt||^2 / ||x1 - x0||^2``.
    Only data states enter; the true dynamics are never evaluated.
    """
    x_t, x_t1, x_t2 = (np.asarray(a, dtype=np.float64) for a in (x_t, x_t1, x_t2))
    denom = np.sum((x_t1 - x_t) ** 2, axis=-1)
    if np.any(denom < FD_MIN_DENOMINATOR):
        raise DegeneratePairError("consecutive states are (numerically) identical")
    target = (x_t2 - 2.0 * x_t1 + x_t) / dt
    pair = np.stack([x_t, x_t1], axis=0)
    out = apply_model(p, pair)
    diff = out[1] - out[0] - target
    per_point = vsum(diff * diff, axis=-1) * (1.0 / denom)
    return vsum(per_point)


def fd_points(states, rollout: int):
    """Split (chunks, rollout + 2, dim) windows into (x_t, x_t+1, x_t+2) triples
    for the ``rollout`` points that have a full second difference."""
    states = np.asarray(states)
    if states.shape[-2] < rollout + 2:
        raise ValueError("FD regularisation needs chunks with one lookahead state")
    return (
        states[..., 0:rollout, :],
        states[..., 1:rollout + 1, :],
        states[..., 2:rollout + 2, :],
    )


def regulariser(p: MlpParams, states, mode: RegMode, sys: SystemId, dt: float, rollout: int,
                dirs=None, rb: RigidBodyParams = DEFAULT_RB, grid: KsGrid = DEFAULT_GRID):
    mode = RegMode.parse(mode)
    if mode is RegMode.ad:
        if dirs is None:
            raise ValueError("AD regularisation needs directions")
        return loss_ad(p, sys, np.asarray(states)[..., : rollout + 1, :], dirs, rb, grid)
    if mode is RegMode.fd:
        return loss_fd(p, *fd_points(states, rollout), dt)
    return 0.0


def combined_loss(p: MlpParams, states, dt: float, rollout: int, mode=RegMode.none, lam: float = 0.0,
                  sys: SystemId | None = None, dirs=None,
                  rb: RigidBodyParams = DEFAULT_RB, grid: KsGrid = DEFAULT_GRID):
    """Trajectory loss plus ``lam`` times the chosen regulariser.

    Returns ``(total, breakdown)``; ``total`` is differentiable when ``p`` is.
    With mode ``none`` or ``lam == 0`` the regulariser is reported but left out
    of the graph, so both paths produce identical gradients.
    """
    mode = RegMode.parse(mode)
    traj = traj_loss(p, states, dt, rollout)
    if mode is RegMode.none:
        reg_value = 0.0
        total = traj
    else:
        reg = regulariser(p, states, mode, sys, dt, rollout, dirs, rb, grid)
        reg_value = float(value_of(reg))
        total = traj if lam == 0.0 else traj + lam * reg
    traj_value = float(value_of(traj))
    breakdown = LossBreakdown(traj_value, reg_value, float(lam), float(value_of(total)))
    return total, breakdown
