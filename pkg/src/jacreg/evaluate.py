"""Long-horizon and pointwise diagnostics of a learned right-hand side."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DEFAULT_GRID, DEFAULT_RB, SystemId, conserved, rhs
from .integrate import etdrk4_rollout, integrate_ode, rk4_step
from .model import MlpParams, TrueDynamicsModel, apply_model, apply_model_jvp, mlp_rollout
from .numerics import DirectionSampler, value_of

DIVERGENCE_RE = 1e3
UNDEFINED_NORM = 1e-14
CONSERVATION_FLOOR = 1e-12


@dataclass
class ReSeries:
    """Per-step relative error of one trajectory, cut at divergence."""

    t: np.ndarray
    re: np.ndarray
    diverged_at: int | None = None


def relative_error(pred, true) -> np.ndarray:
    """``||x_theta(t) - x(t)|| / ||x(t)||`` over the last axis.

    Non-finite predictions give ``inf``; steps where the truth is (numerically)
    zero give ``nan``.
    """
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise ValueError(f"trajectory shapes differ: {pred.shape} vs {true.shape}")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        num = np.linalg.norm(pred - true, axis=-1)
        den = np.linalg.norm(true, axis=-1)
        re = num / den
    re = np.where(np.all(np.isfinite(pred), axis=-1), re, np.inf)
    return np.where(den < UNDEFINED_NORM, np.nan, re)


def relative_error_series(model_traj, true_traj, dt: float = 1.0, t0: float = 0.0) -> ReSeries:
    re = relative_error(model_traj, true_traj)
    if re.ndim != 1:
        raise ValueError("relative_error_series handles one trajectory; use relative_error for batches")
    bad = np.flatnonzero(~(re <= DIVERGENCE_RE) & ~np.isnan(re))
    diverged = int(bad[0]) if bad.size else None
    cut = diverged if diverged is not None else re.size
    t = t0 + dt * np.arange(re.size)
    return ReSeries(t[:cut], re[:cut], diverged)


def divergence_step(re: np.ndarray, threshold: float = 1.0) -> np.ndarray:
    """First step whose relative error exceeds ``threshold`` (or is non-finite).

    Trajectories that never cross get ``len(series)``, i.e. one past the end.
    """
    re = np.atleast_2d(np.asarray(re, dtype=np.float64))
    crossed = ~(re <= threshold) & ~np.isnan(re)
    first = np.where(crossed.any(axis=1), crossed.argmax(axis=1), re.shape[1])
    return first


def offline_error(m, sys, states) -> float:
    """Mean over states of ``||F(x) - F_theta(x)||^2``."""
    states = np.asarray(states, dtype=np.float64)
    if states.size == 0:
        raise ValueError("need at least one state")
    diff = rhs(sys, states) - value_of(apply_model(m, states))
    return float(np.mean(np.sum(diff * diff, axis=-1)))


def _jacobian_cols(m, sys, states):
    n = states.shape[-1]
    X = np.broadcast_to(states[:, None, :], (states.shape[0], n, n)).copy()
    E = np.broadcast_to(np.eye(n), X.shape).copy()
    truth = TrueDynamicsModel(sys).jvp(X, E)
    learned = value_of(apply_model_jvp(m, X, E))
    return truth, learned


def jacobian_error(m, sys, states, mode: str = "full", V: int = 4, seed: int = 0) -> float:
    """Mean over states of ``||J_F(x) - J_theta(x)||_F``.

    ``mode="full"`` assembles both Jacobians column by column (dim <= 16);
    ``mode="hutchinson"`` takes the square root of the ``V``-probe estimate.
    """
    per_state = jacobian_error_per_state(m, sys, states, mode, V, seed)
    return float(np.mean(per_state))


def jacobian_error_per_state(m, sys, states, mode: str = "full", V: int = 4, seed: int = 0) -> np.ndarray:
    sys = SystemId.parse(sys)
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    n = states.shape[-1]
    if mode == "full":
        if n > 16:
            raise ValueError("full Jacobians are limited to dim <= 16; use mode='hutchinson'")
        truth, learned = _jacobian_cols(m, sys, states)
        return np.sqrt(np.sum((truth - learned) ** 2, axis=(1, 2)))
    if mode != "hutchinson":
        raise ValueError(f"unknown mode {mode!r}")
    dirs = DirectionSampler(seed, n).draw(V)
    pts = states[:, None, :]
    truth = TrueDynamicsModel(sys).jvp(pts, dirs[None])
    learned = value_of(apply_model_jvp(m, pts, dirs[None]))
    est = np.sum((truth - learned) ** 2, axis=(1, 2)) / V
    return np.sqrt(est)


def jacobian_norms(m, sys, states):
    """Per-state ``(||J_F||_F, ||J_theta||_F, ||J_F - J_theta||_F)``; small dims only."""
    truth, learned = _jacobian_cols(m, sys, np.atleast_2d(states))
    f = lambda a: np.sqrt(np.sum(a * a, axis=(1, 2)))  # noqa: E731
    return f(truth), f(learned), f(truth - learned)


def conservation_error_series(traj, sys) -> np.ndarray:
    """``|Q(x(t)) - Q(x(0))| / max(|Q(x(0))|, 1e-12)`` along the step axis."""
    traj = np.asarray(traj, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        q = conserved(sys, traj)
        q0 = q[..., :1]
        return np.abs(q - q0) / np.maximum(np.abs(q0), CONSERVATION_FLOOR)


def gronwall_bound(eps_inf: float, L: float, t) -> np.ndarray | float:
    """Upper bound ``eps_inf / L * (exp(L t) - 1)`` on the trajectory gap."""
    if not L > 0:
        raise ValueError("Lipschitz constant must be positive")
    if eps_inf < 0 or np.any(np.asarray(t) < 0):
        raise ValueError("eps_inf and t must be non-negative")
    return eps_inf / L * np.expm1(L * np.asarray(t, dtype=np.float64))


def model_rollout(m, sys, x0, dt: float, n_steps: int) -> np.ndarray:
    """Batched long rollouts; non-finite states (and everything after) are NaN."""
    if isinstance(m, MlpParams):
        return mlp_rollout(m, x0, dt, n_steps)
    sys = SystemId.parse(sys)
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    if isinstance(m, TrueDynamicsModel) and sys is SystemId.KuramotoSivashinsky:
        return etdrk4_rollout(x0, DEFAULT_GRID, dt, n_steps)
    if isinstance(m, TrueDynamicsModel):
        return integrate_ode(sys, x0, dt, n_steps, DEFAULT_RB)
    out = np.full((x0.shape[0], n_steps + 1, x0.shape[1]), np.nan)
    out[:, 0] = x0
    x = x0
    for s in range(n_steps):
        x = rk4_step(lambda u: value_of(apply_model(m, u)), x, dt)
        out[:, s + 1] = x
    return out


@dataclass
class MetricsReport:
    traj_mse: float
    eps_offline: float
    jac_error: float
    re_series: list = field(default_factory=list)
    cons_series: list = field(default_factory=list)
    final_re_distribution: list = field(default_factory=list)
    diverged_count: int = 0
    divergence_steps: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "traj_mse": self.traj_mse,
            "eps_offline": self.eps_offline,
            "jac_error": self.jac_error,
            "diverged_count": self.diverged_count,
            "n_trajectories": len(self.divergence_steps),
            "median_divergence_step": float(np.median(self.divergence_steps)) if self.divergence_steps else math.nan,
        }


def _thin(states: np.ndarray, limit: int) -> np.ndarray:
    if states.shape[0] <= limit:
        return states
    idx = np.linspace(0, states.shape[0] - 1, limit).round().astype(int)
    return states[idx]


def evaluate(m, sys, true_states, dt: float, horizon: int | None = None, jac_mode: str | None = None,
             V: int = 4, seed: int = 0, max_points: int = 4000, re_threshold: float = 1.0) -> MetricsReport:
    """Roll the model out from every test initial state and compare.

    ``true_states`` is (trajectories, steps, dim) at the model time step ``dt``.
    A trajectory counts as diverged at its first non-finite state or relative
    error above 1e3; means over time use the trajectories still alive.
    """
    sys = SystemId.parse(sys)
    true_states = np.asarray(true_states, dtype=np.float64)
    if horizon is None:
        horizon = true_states.shape[1] - 1
    if horizon > true_states.shape[1] - 1:
        raise ValueError(f"horizon {horizon} exceeds the test trajectories ({true_states.shape[1] - 1} steps)")
    truth = true_states[:, : horizon + 1]
    pred = model_rollout(m, sys, truth[:, 0], dt, horizon)
    re = relative_error(pred, truth)
    blown = ~(re <= DIVERGENCE_RE) & ~np.isnan(re)
    diverged_at = np.where(blown.any(axis=1), blown.argmax(axis=1), -1)
    alive = np.ones_like(re, dtype=bool)
    for i, d in enumerate(diverged_at):
        if d >= 0:
            alive[i, d:] = False

    t = dt * np.arange(horizon + 1)
    with np.errstate(invalid="ignore", over="ignore"):
        re_alive = np.where(alive, re, np.nan)
        cons = np.where(alive, conservation_error_series(pred, sys), np.nan)
        sq = np.where(alive, np.sum((pred - truth) ** 2, axis=-1), np.nan)
    re_mean = _nanmean_rows(re_alive)
    cons_mean = _nanmean_rows(cons)
    re_series = [(float(a), float(b)) for a, b in zip(t, re_mean)]
    cons_series = [(float(a), float(b)) for a, b in zip(t, cons_mean)]
    traj_mse = float(np.nanmean(sq)) if np.any(alive) else math.inf

    pts = _thin(truth.reshape(-1, truth.shape[-1]), max_points)
    mode = jac_mode or ("full" if truth.shape[-1] <= 16 else "hutchinson")
    report = MetricsReport(
        traj_mse=traj_mse,
        eps_offline=offline_error(m, sys, pts),
        jac_error=jacobian_error(m, sys, pts, mode, V, seed),
        re_series=re_series,
        cons_series=cons_series,
        final_re_distribution=[float(r) if d < 0 else math.inf for r, d in zip(re[:, -1], diverged_at)],
        diverged_count=int(np.sum(diverged_at >= 0)),
        divergence_steps=[int(s) for s in divergence_step(re, re_threshold)],
    )
    return report


def _nanmean_rows(a: np.ndarray) -> np.ndarray:
    counts = np.sum(~np.isnan(a), axis=0)
    sums = np.nansum(a, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
