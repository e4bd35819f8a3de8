"""Adam training over chunked trajectories, best-checkpoint selection and the
lambda grid search."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import DEFAULT_GRID, DEFAULT_RB, SystemId
from .losses import LossBreakdown, RegMode, combined_loss, traj_loss
from .model import MlpParams, init_params
from .numerics import DirectionSampler, NumericFailure, grad

log = logging.getLogger(__name__)

LAMBDA_GRIDS = {
    (SystemId.TwoBody, RegMode.ad): [1e-11, 5e-12, 1e-12, 5e-13, 1e-13],
    (SystemId.TwoBody, RegMode.fd): [1e-11, 5e-12, 1e-12, 5e-13, 1e-13],
    (SystemId.RigidBody, RegMode.ad): [1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
    (SystemId.RigidBody, RegMode.fd): [1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
    (SystemId.KuramotoSivashinsky, RegMode.ad): [5e-12, 1e-12, 5e-13, 1e-13],
    (SystemId.KuramotoSivashinsky, RegMode.fd): [1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
}

REFERENCE_LAMBDA_OPTIMA = {
    (SystemId.TwoBody, RegMode.ad): 5e-13,
    (SystemId.TwoBody, RegMode.fd): 5e-13,
    (SystemId.RigidBody, RegMode.ad): 1e-6,
    (SystemId.RigidBody, RegMode.fd): 1e-2,
    (SystemId.KuramotoSivashinsky, RegMode.ad): 5e-13,
    (SystemId.KuramotoSivashinsky, RegMode.fd): 1e-7,
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    system: SystemId
    dt: float
    dt_model: float
    T_train: float
    T_val: float
    T_test: float
    rollout: int
    n_train: int
    n_val: int
    n_test: int
    epochs: int
    test_horizon: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    lam: float = 0.0
    reg_mode: RegMode = RegMode.none
    V: int = 10
    eval_V: int = 4
    seed: int = 0
    hidden: int = 200
    batch_size: int | None = None
    direction_resampling: str = "per-iteration"
    ks_warmup: int = 360
    ks_substeps: int = 4
    lambda_grid: list | None = None

    def __post_init__(self):
        self.system = SystemId.parse(self.system)
        self.reg_mode = RegMode.parse(self.reg_mode)
        self.validate()

    def validate(self):
        positive = ["dt", "dt_model", "T_train", "T_val", "T_test", "rollout", "n_train",
                    "n_val", "n_test", "test_horizon", "lr", "eps_adam", "V", "eval_V", "hidden"]
        for name in positive:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
                raise ConfigError(f"config.{name}: must be a positive number, got {value!r}")
        for name in ("epochs", "ks_warmup"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 0:
                raise ConfigError(f"config.{name}: must be a non-negative integer")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("config.beta1/beta2: must lie in [0, 1)")
        if self.lam < 0:
            raise ConfigError("config.lam: must be non-negative")
        ratio = self.dt_model / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("config.dt_model: must be an integer multiple of config.dt")
        if self.rollout * self.dt_model > self.T_train + 1e-12:
            raise ConfigError("config.rollout: rollout * dt_model exceeds T_train")
        if self.batch_size is not None and (not isinstance(self.batch_size, int) or self.batch_size < 1):
            raise ConfigError("config.batch_size: must be a positive integer or null")
        if self.direction_resampling not in ("per-iteration", "fixed"):
            raise ConfigError("config.direction_resampling: must be 'per-iteration' or 'fixed'")

    @property
    def stride(self) -> int:
        """Data samples per model step."""
        return int(round(self.dt_model / self.dt))

    def steps(self, T: float) -> int:
        return int(round(T / self.dt))

    def with_(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["system"] = self.system.short
        d["reg_mode"] = self.reg_mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config: must be a JSON object")
        d = dict(d)
        profile = d.pop("profile", None)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"config.{unknown[0]}: unknown field")
        if "system" not in d:
            raise ConfigError("config.system: required")
        try:
            system = SystemId.parse(d["system"])
        except ValueError as exc:
            raise ConfigError(f"config.system: {exc}") from None
        profiles = {"full": full_profile, "desk": desk_profile}
        if profile is not None and profile not in profiles:
            raise ConfigError("config.profile: must be 'full' or 'desk'")
        merged = profiles[profile](system).to_dict() if profile else {}
        merged.update(d)
        for f in dataclasses.fields(cls):
            no_default = f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
            if no_default and f.name not in merged:
                raise ConfigError(f"config.{f.name}: required")
        try:
            return cls(**merged)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config: {exc}") from None


def full_profile(system) -> ExperimentConfig:
    """Full-scale settings (4500/1000 epochs, hidden 200)."""
    system = SystemId.parse(system)
    common = dict(hidden=200, V=10, eval_V=4)
    if system is SystemId.TwoBody:
        return ExperimentConfig(system, 0.01, 0.01, 8.0, 8.0, 100.0, 2, 40, 40, 100, 4500, 10000, **common)
    if system is SystemId.RigidBody:
        return ExperimentConfig(system, 0.01, 0.1, 15.0, 15.0, 800.0, 5, 40, 40, 100, 4500, 8000, **common)
    return ExperimentConfig(system, 0.2, 0.2, 28.0, 28.0, 128.0, 2, 512, 128, 128, 1000, 640, **common)


def desk_profile(system) -> ExperimentConfig:
    """Scaled-down settings that train in minutes on one CPU core."""
    system = SystemId.parse(system)
    if system is SystemId.TwoBody:
        return ExperimentConfig(system, 0.01, 0.01, 8.0, 8.0, 100.0, 2, 10, 10, 20, 300, 4000, hidden=64)
    if system is SystemId.RigidBody:
        return ExperimentConfig(system, 0.01, 0.1, 15.0, 15.0, 800.0, 5, 10, 10, 20, 300, 2000, hidden=64)
    return ExperimentConfig(system, 0.2, 0.2, 28.0, 28.0, 128.0, 2, 16, 8, 8, 100, 640, hidden=64)


# -- optimiser ----------------------------------------------------------------


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "AdamState":
        d = params.as_dict()
        return cls({k: np.zeros_like(a) for k, a in d.items()}, {k: np.zeros_like(a) for k, a in d.items()}, 0)


def adam_step(p: MlpParams, grads: dict, st: AdamState, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericFailure(f"non-finite gradient for {k}", where=k)
    t = st.t + 1
    new_p, new_m, new_v = {}, {}, {}
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for k, a in p.as_dict().items():
        g = grads[k]
        with np.errstate(over="ignore"):
            m = b1 * st.m[k] + (1.0 - b1) * g
            v = b2 * st.v[k] + (1.0 - b2) * g * g
        new_m[k], new_v[k] = m, v
        new_p[k] = a - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return MlpParams(**new_p), AdamState(new_m, new_v, t)


# -- training -----------------------------------------------------------------


@dataclass
class TrainRecord:
    epoch: int
    loss: LossBreakdown
    val_mse: float
    wall_time: float = 0.0


@dataclass
class TrainResult:
    params: MlpParams
    records: list = field(default_factory=list)
    best_epoch: int = 0
    failed: bool = False
    failure: str | None = None

    @property
    def best_val_mse(self) -> float:
        return self.records[self.best_epoch].val_mse if self.records else math.inf


def validation_mse(p: MlpParams, val_states: np.ndarray, dt: float, rollout: int) -> float:
    """Mean over chunks of the per-chunk trajectory loss."""
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            total = float(traj_loss(p, val_states, dt, rollout))
        except NumericFailure:
            return math.inf
    if not np.isfinite(total):
        return math.inf
    return total / val_states.shape[0]


def _sampler_seed(seed: int) -> int:
    return (seed * 0x9E3779B97F4A7C15 + 0xD1B54A32D192ED03) & ((1 << 64) - 1)


def train(cfg: ExperimentConfig, train_states: np.ndarray, val_states: np.ndarray,
          init: MlpParams | None = None) -> TrainResult:
    """Train from ``cfg.seed``; returns the params with the lowest validation MSE.

    ``train_states``/``val_states`` are stacked chunks (chunks, window, dim) at
    the model time step. For FD mode the window must hold ``rollout + 2`` states.
    """
    train_states = np.asarray(train_states, dtype=np.float64)
    val_states = np.asarray(val_states, dtype=np.float64)
    if train_states.shape[0] == 0 or val_states.shape[0] == 0:
        raise ValueError("need non-empty training and validation chunks")
    dim = train_states.shape[-1]
    N = cfg.rollout
    dt = cfg.dt_model
    mode = cfg.reg_mode
    if mode is RegMode.fd and train_states.shape[1] < N + 2:
        raise ValueError("FD training needs chunks built with lookahead=1")

    params = init if init is not None else init_params(cfg.seed, dim, cfg.hidden)
    state = AdamState.zeros_like(params)
    sampler = DirectionSampler(_sampler_seed(cfg.seed), dim)
    fixed_dirs = sampler.directions(0, cfg.V)
    shuffle_rng = np.random.default_rng([cfg.seed, 0x5EED])

    def loss_and_grad(p_dict, batch, dirs):
        holder = {}

        def fn(leaves):
            total, br = combined_loss(MlpParams(**leaves), batch, dt, N, mode, cfg.lam,
                                      cfg.system, dirs, DEFAULT_RB, DEFAULT_GRID)
            holder["br"] = br
            return total

        _, g = grad(fn, p_dict)
        return holder["br"], g

    t0 = time.perf_counter()
    with np.errstate(over="ignore", invalid="ignore"):
        _, br0 = combined_loss(params, train_states, dt, N, mode, cfg.lam, cfg.system, fixed_dirs)
    val0 = validation_mse(params, val_states, dt, N)
    result = TrainResult(params, [TrainRecord(0, br0, val0, time.perf_counter() - t0)], 0)
    best_val = val0

    n_chunks = train_states.shape[0]
    bs = cfg.batch_size or n_chunks
    for epoch in range(1, cfg.epochs + 1):
        order = np.arange(n_chunks) if bs >= n_chunks else shuffle_rng.permutation(n_chunks)
        acc = np.zeros(3)
        try:
            for start in range(0, n_chunks, bs):
                batch = train_states[order[start:start + bs]]
                if mode is RegMode.ad:
                    dirs = sampler.draw(cfg.V) if cfg.direction_resampling == "per-iteration" else fixed_dirs
                else:
                    dirs = None
                br, g = loss_and_grad(params.as_dict(), batch, dirs)
                params, state = adam_step(params, g, state, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_adam)
                acc += (br.traj, br.reg, br.total)
        except (NumericFailure, ValueError) as exc:
            log.warning("training stopped at epoch %d: %s", epoch, exc)
            result.failed = True
            result.failure = f"epoch {epoch}: {exc}"
            break
        val = validation_mse(params, val_states, dt, N)
        br_epoch = LossBreakdown(float(acc[0]), float(acc[1]), float(cfg.lam), float(acc[2]))
        result.records.append(TrainRecord(epoch, br_epoch, val, time.perf_counter() - t0))
        if val < best_val:
            best_val = val
            result.params = params
            result.best_epoch = epoch
        if not np.isfinite(val):
            result.failed = True
            result.failure = f"epoch {epoch}: validation loss is not finite"
            break
    return result


@dataclass
class GridRow:
    lam: float
    val_mse: float
    best_epoch: int
    failed: bool


class GridSearchError(RuntimeError):
    def __init__(self, message, table):
        super().__init__(message)
        self.table = table


def grid_search(cfg: ExperimentConfig, lambdas: Sequence[float], train_states, val_states):
    """Train one model per lambda (shared seed); pick the lowest validation MSE.

    Ties go to the larger lambda. Returns ``(best_lambda, rows, results)``.
    """
    if len(lambdas) < 1:
        raise ValueError("need at least one lambda")
    rows, results = [], {}
    for lam in lambdas:
        res = train(cfg.with_(lam=float(lam)), train_states, val_states)
        results[float(lam)] = res
        rows.append(GridRow(float(lam), res.best_val_mse, res.best_epoch, res.failed))
    usable = [r for r in rows if not r.failed and np.isfinite(r.val_mse)]
    if not usable:
        raise GridSearchError("every grid-search run failed", rows)
    best = min(usable, key=lambda r: (r.val_mse, -r.lam))
    return best.lam, rows, results
