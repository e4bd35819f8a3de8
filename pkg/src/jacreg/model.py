"""Three-layer ReLU MLP used as the learned right-hand side."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ._accel import njit, numba_enabled
from .numerics import NumericFailure, linear, relu, relu_mask, value_of

LAYER_ORDER = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass(frozen=True)
class MlpParams:
    """Weights are stored (out, in). Fields may hold arrays or graph leaves."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        hidden, n = np.shape(value_of(self.W1))
        expected = {
            "b1": (hidden,), "W2": (hidden, hidden), "b2": (hidden,),
            "W3": (n, hidden), "b3": (n,),
        }
        for name, shape in expected.items():
            got = np.shape(value_of(getattr(self, name)))
            if got != shape:
                raise ValueError(f"{name} has shape {got}, expected {shape}")

    @property
    def dim(self) -> int:
        return int(np.shape(value_of(self.W1))[1])

    @property
    def hidden(self) -> int:
        return int(np.shape(value_of(self.W1))[0])

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d) -> "MlpParams":
        return cls(**{k: d[k] for k in LAYER_ORDER})

    def flat(self) -> np.ndarray:
        return np.concatenate([np.ravel(value_of(getattr(self, k))) for k in LAYER_ORDER])

    @classmethod
    def from_flat(cls, flat: np.ndarray, n: int, hidden: int) -> "MlpParams":
        flat = np.asarray(flat, dtype=np.float64)
        shapes = param_shapes(n, hidden)
        expected = sum(int(np.prod(s)) for s in shapes.values())
        if flat.size != expected:
            raise ValueError(f"expected {expected} parameters, got {flat.size}")
        out, pos = {}, 0
        for k in LAYER_ORDER:
            size = int(np.prod(shapes[k]))
            out[k] = flat[pos:pos + size].reshape(shapes[k]).copy()
            pos += size
        return cls(**out)

    def check_finite(self):
        for k in LAYER_ORDER:
            if not np.all(np.isfinite(value_of(getattr(self, k)))):
                raise NumericFailure(f"parameter {k} is not finite", where=k)


def param_shapes(n: int, hidden: int) -> dict:
    return {
        "W1": (hidden, n), "b1": (hidden,),
        "W2": (hidden, hidden), "b2": (hidden,),
        "W3": (n, hidden), "b3": (n,),
    }


def param_count(n: int, hidden: int) -> int:
    return n * hidden + hidden + hidden * hidden + hidden + hidden * n + n


def init_params(seed: int, n: int, hidden: int = 200) -> MlpParams:
    """Uniform fan-in initialisation, zero biases."""
    if n < 1 or hidden < 1:
        raise ValueError("n and hidden must be >= 1")
    rng = np.random.default_rng(seed)
    shapes = param_shapes(n, hidden)
    out = {}
    for k in LAYER_ORDER:
        shape = shapes[k]
        if k.startswith("W"):
            bound = np.sqrt(1.0 / shape[1])
            out[k] = rng.uniform(-bound, bound, size=shape)
        else:
            out[k] = np.zeros(shape)
    return MlpParams(**out)


def forward(p: MlpParams, x):
    """``W3 relu(W2 relu(W1 x + b1) + b2) + b3`` over the last axis of ``x``."""
    h = relu(linear(x, p.W1, p.b1))
    h = relu(linear(h, p.W2, p.b2))
    out = linear(h, p.W3, p.b3)
    if isinstance(out, np.ndarray) and not np.all(np.isfinite(out)):
        raise NumericFailure("model output is not finite")
    return out


def model_jvp(p: MlpParams, x, v):
    """Jacobian-vector product of :func:`forward`, written out layer by layer.

    The tangent goes through each weight matrix without bias and is masked by
    the ReLU derivative of the matching pre-activation (0 at exactly 0).
    """
    z1 = linear(x, p.W1, p.b1)
    t = linear(v, p.W1) * relu_mask(z1)
    z2 = linear(relu(z1), p.W2, p.b2)
    t = linear(t, p.W2) * relu_mask(z2)
    return linear(t, p.W3)


def model_fn(p: MlpParams):
    return lambda x: forward(p, x)


# -- long-horizon inference rollouts -----------------------------------------


@njit
def _mlp_eval(W1, b1, W2, b2, W3, b3, x, out):
    h1 = W1 @ x + b1
    for i in range(h1.shape[0]):
        if h1[i] < 0.0:
            h1[i] = 0.0
    h2 = W2 @ h1 + b2
    for i in range(h2.shape[0]):
        if h2[i] < 0.0:
            h2[i] = 0.0
    out[:] = W3 @ h2 + b3


@njit
def _mlp_rk4_numba(W1, b1, W2, b2, W3, b3, x0, dt, n_steps):
    batch, n = x0.shape
    out = np.full((batch, n_steps + 1, n), np.nan)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    for b in range(batch):
        x = x0[b].copy()
        out[b, 0] = x
        for s in range(n_steps):
            _mlp_eval(W1, b1, W2, b2, W3, b3, x, k1)
            _mlp_eval(W1, b1, W2, b2, W3, b3, x + 0.5 * dt * k1, k2)
            _mlp_eval(W1, b1, W2, b2, W3, b3, x + 0.5 * dt * k2, k3)
            _mlp_eval(W1, b1, W2, b2, W3, b3, x + dt * k3, k4)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            finite = True
            for j in range(n):
                if not np.isfinite(x[j]):
                    finite = False
            if not finite:
                break
            out[b, s + 1] = x
    return out


def _mlp_rk4_numpy(W1, b1, W2, b2, W3, b3, x0, dt, n_steps):
    def f(x):
        h = np.maximum(x @ W1.T + b1, 0.0)
        h = np.maximum(h @ W2.T + b2, 0.0)
        return h @ W3.T + b3

    batch, n = x0.shape
    out = np.full((batch, n_steps + 1, n), np.nan)
    out[:, 0] = x0
    alive = np.ones(batch, dtype=bool)
    x = x0.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(n_steps):
            xa = x[alive]
            k1 = f(xa)
            k2 = f(xa + 0.5 * dt * k1)
            k3 = f(xa + 0.5 * dt * k2)
            k4 = f(xa + dt * k3)
            xa = xa + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            ok = np.all(np.isfinite(xa), axis=1)
            idx = np.flatnonzero(alive)
            x[idx[ok]] = xa[ok]
            out[idx[ok], s + 1] = xa[ok]
            alive[idx[~ok]] = False
            if not alive.any():
                break
    return out


def mlp_rollout(p: MlpParams, x0, dt: float, n_steps: int) -> np.ndarray:
    """RK4 rollouts of the model from a batch of initial states, no gradients.

    Returns (batch, n_steps + 1, dim). Once a trajectory produces a non-finite
    state, it and every later entry are NaN.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    arrays = [np.ascontiguousarray(value_of(getattr(p, k))) for k in LAYER_ORDER]
    if numba_enabled():
        return _mlp_rk4_numba(*arrays, np.ascontiguousarray(x0), float(dt), int(n_steps))
    return _mlp_rk4_numpy(*arrays, x0, float(dt), int(n_steps))



# -- the true right-hand side behind the same interface ------------------------


@dataclass(frozen=True)
class TrueDynamicsModel:
    """Wraps a benchmark system's exact right-hand side as if it were a model."""

    system: object

    def __call__(self, x):
        from .dynamics import rhs

        return rhs(self.system, x)

    def jvp(self, x, v):
        from .dynamics import true_jvp

        shape = np.broadcast_shapes(np.shape(x), np.shape(v))
        return true_jvp(self.system, np.broadcast_to(x, shape).copy(), np.broadcast_to(v, shape).copy())


def apply_model(m, x):
    return forward(m, x) if isinstance(m, MlpParams) else m(x)


def apply_model_jvp(m, x, v):
    return model_jvp(m, x, v) if isinstance(m, MlpParams) else m.jvp(x, v)
