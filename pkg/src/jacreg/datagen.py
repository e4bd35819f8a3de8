"""Ground-truth datasets: initial-condition sampling, integration, splits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import DEFAULT_GRID, DEFAULT_RB, KsGrid, SystemId
from .integrate import Chunk, Trajectory, chunk_trajectories, etdrk4_rollout, integrate_ode, stack_chunks
from .numerics import NumericFailure

SPLITS = ("train", "val", "test")
# distinct entropy words per split so the three seed streams never coincide
SPLIT_KEYS = {"train": 0x7261696E, "val": 0x76616C69, "test": 0x74657374}

TB_ECCENTRICITY = (0.5, 0.7)
RB_ANGLE = (0.5, 1.5)
KS_MODES = 10
KS_AMPLITUDE = (-0.5, 0.5)
KS_WAVENUMBERS = (1, 3)


class GenerationError(RuntimeError):
    def __init__(self, message, seed=None, split=None, index=None):
        super().__init__(message)
        self.seed, self.split, self.index = seed, split, index


@dataclass(frozen=True)
class InitialConditionSpec:
    system: SystemId
    seed: int = 0
    split: str = "train"

    def rng(self, index: int) -> np.random.Generator:
        if index < 0:
            raise ValueError("index must be >= 0")
        return np.random.default_rng([self.seed, SPLIT_KEYS[self.split], index])


def tb_initial(e: float) -> np.ndarray:
    return np.array([1.0 - e, 0.0, 0.0, np.sqrt((1.0 + e) / (1.0 - e))])


def rb_initial(phi: float) -> np.ndarray:
    return np.array([np.cos(phi), 0.0, np.sin(phi)])


def ks_initial(amplitudes, wavenumbers, phases, grid: KsGrid = DEFAULT_GRID) -> np.ndarray:
    """``sum_m A_m sin(2 pi l_m x / L + phi_m)``, then the roundoff mean removed."""
    x = grid.x
    A = np.asarray(amplitudes, dtype=np.float64)[:, None]
    ls = np.asarray(wavenumbers, dtype=np.float64)[:, None]
    ph = np.asarray(phases, dtype=np.float64)[:, None]
    u = np.sum(A * np.sin(2.0 * np.pi * ls * x[None, :] / grid.length + ph), axis=0)
    return u - u.mean()


def sample_initial(spec: InitialConditionSpec, index: int, grid: KsGrid = DEFAULT_GRID) -> np.ndarray:
    system = SystemId.parse(spec.system)
    rng = spec.rng(index)
    if system is SystemId.TwoBody:
        return tb_initial(rng.uniform(*TB_ECCENTRICITY))
    if system is SystemId.RigidBody:
        return rb_initial(rng.uniform(*RB_ANGLE))
    amps = rng.uniform(*KS_AMPLITUDE, size=KS_MODES)
    ls = rng.integers(KS_WAVENUMBERS[0], KS_WAVENUMBERS[1] + 1, size=KS_MODES)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=KS_MODES)
    return ks_initial(amps, ls, phases, grid)


@dataclass
class Dataset:
    split: str
    trajectories: list
    manifest: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.trajectories)


def split_config(cfg, split: str) -> tuple[int, float]:
    counts = {"train": cfg.n_train, "val": cfg.n_val, "test": cfg.n_test}
    durations = {"train": cfg.T_train, "val": cfg.T_val, "test": cfg.T_test}
    return counts[split], durations[split]


def generate_split(cfg, split: str, grid: KsGrid = DEFAULT_GRID) -> Dataset:
    system = cfg.system
    count, T = split_config(cfg, split)
    n_steps = cfg.steps(T)
    spec = InitialConditionSpec(system, cfg.seed, split)
    x0 = np.stack([sample_initial(spec, i, grid) for i in range(count)])
    try:
        if system is SystemId.KuramotoSivashinsky:
            full = etdrk4_rollout(x0, grid, cfg.dt, cfg.ks_warmup + n_steps, cfg.ks_substeps)
            states = full[:, cfg.ks_warmup:]
            t0 = cfg.ks_warmup * cfg.dt
        else:
            states = integrate_ode(system, x0, cfg.dt, n_steps, DEFAULT_RB)
            t0 = 0.0
    except (NumericFailure, ValueError) as exc:
        bad = getattr(exc, "where", None)
        raise GenerationError(
            f"ground truth diverged in split {split!r} (seed {cfg.seed}, trajectory {bad}): {exc}",
            seed=cfg.seed, split=split, index=bad,
        ) from exc
    trajs = [Trajectory(s, cfg.dt, t0, system) for s in states]
    manifest = {"split": split, "seed": cfg.seed, "split_key": SPLIT_KEYS[split], "count": count, "steps": n_steps + 1}
    return Dataset(split, trajs, manifest)


def generate(cfg, grid: KsGrid = DEFAULT_GRID) -> dict:
    """All three splits as ``{"train": Dataset, "val": ..., "test": ...}``."""
    return {split: generate_split(cfg, split, grid) for split in SPLITS}


def initial_condition_doc(system) -> dict:
    system = SystemId.parse(system)
    if system is SystemId.TwoBody:
        return {"state": "(1-e, 0, 0, sqrt((1+e)/(1-e)))", "e": {"uniform": list(TB_ECCENTRICITY)}}
    if system is SystemId.RigidBody:
        return {"state": "(cos phi, 0, sin phi)", "phi": {"uniform": list(RB_ANGLE)}}
    return {
        "state": "sum_m A_m sin(2 pi l_m x / L + phi_m), m=1..10, mean removed",
        "A_m": {"uniform": list(KS_AMPLITUDE)},
        "l_m": {"integers": list(KS_WAVENUMBERS)},
        "phi_m": {"uniform": [0.0, "2pi"]},
        "grid": {"n_points": DEFAULT_GRID.n_points, "length": DEFAULT_GRID.length},
    }


def chunk_split(trajs, cfg, lookahead: int = 0) -> list[Chunk]:
    """Chunks at the model time step (every ``cfg.stride``-th stored sample)."""
    sub = [t.subsample(cfg.stride) for t in trajs]
    return chunk_trajectories(sub, cfg.rollout, lookahead)


def chunk_array(trajs, cfg, lookahead: int = 0) -> np.ndarray:
    return stack_chunks(chunk_split(trajs, cfg, lookahead))
