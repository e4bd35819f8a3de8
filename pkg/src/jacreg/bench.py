"""Wall-clock comparison of the numba kernels and their numpy fallbacks."""

from __future__ import annotations

import os
import time
from contextlib import contextmanager

import numpy as np

from ._accel import HAVE_NUMBA


@contextmanager
def backend(name: str):
    old = os.environ.get("JACREG_NUMBA")
    os.environ["JACREG_NUMBA"] = "1" if name == "numba" else "0"
    try:
        yield
    finally:
        if old is None:
            os.environ.pop("JACREG_NUMBA", None)
        else:
            os.environ["JACREG_NUMBA"] = old


def _kernels():
    from .dynamics import SystemId
    from .integrate import integrate_ode
    from .model import init_params, mlp_rollout
    from .numerics.fft import fft

    rng = np.random.default_rng(0)
    signal = rng.standard_normal((64, 256))
    x_tb = np.tile([0.5, 0.0, 0.0, 1.7], (20, 1))
    p = init_params(0, 4, 64)
    return {
        "fft_64x256": lambda: fft(signal),
        "tb_rk4_20x2000": lambda: integrate_ode(SystemId.TwoBody, x_tb, 0.01, 2000),
        "mlp_rollout_20x1000": lambda: mlp_rollout(p, x_tb, 0.01, 1000),
    }


def run_benchmarks(repeats: int = 3) -> list[tuple[str, str, float]]:
    """Best-of-``repeats`` seconds per kernel and backend (after one warm-up call)."""
    names = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    rows = []
    for name in names:
        with backend(name):
            for label, fn in _kernels().items():
                fn()
                best = min(_timed(fn) for _ in range(repeats))
                rows.append((label, name, best))
    return rows


def _timed(fn) -> float:
    t = time.perf_counter()
    fn()
    return time.perf_counter() - t
