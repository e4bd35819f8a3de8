"""Iterative radix-2 FFT for power-of-two lengths, batched over leading axes.

Two interchangeable kernels: a numba loop nest and a stage-vectorized numpy
version. ``JACREG_NUMBA=0`` selects the latter.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .._accel import njit, numba_enabled


def _check_length(n: int):
    if n < 1 or n & (n - 1):
        raise ValueError(f"radix-2 FFT needs a power-of-two length, got {n}")


@lru_cache(maxsize=16)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=16)
def _twiddles(n: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(n // 2) / n)


@njit
def _fft_rows_numba(a, rev, tw):
    rows, n = a.shape
    out = np.empty_like(a)
    for r in range(rows):
        for i in range(n):
            out[r, rev[i]] = a[r, i]
    size = 2
    while size <= n:
        half = size // 2
        step = n // size
        for r in range(rows):
            for start in range(0, n, size):
                for j in range(half):
                    w = tw[j * step]
                    u = out[r, start + j]
                    t = w * out[r, start + j + half]
                    out[r, start + j] = u + t
                    out[r, start + j + half] = u - t
        size *= 2
    return out


def _fft_rows_numpy(a, rev, tw):
    rows, n = a.shape
    out = a[:, rev]
    size = 2
    while size <= n:
        half = size // 2
        blocks = out.reshape(rows, n // size, size)
        w = tw[:: n // size][:half]
        u = blocks[:, :, :half].copy()
        t = w * blocks[:, :, half:]
        blocks[:, :, :half] = u + t
        blocks[:, :, half:] = u - t
        out = blocks.reshape(rows, n)
        size *= 2
    return out


def fft(x: np.ndarray) -> np.ndarray:
    """Forward DFT along the last axis, ``X[k] = sum_j x[j] exp(-2 pi i jk/n)``."""
    x = np.asarray(x)
    n = x.shape[-1]
    _check_length(n)
    flat = np.ascontiguousarray(x.reshape(-1, n), dtype=np.complex128)
    kernel = _fft_rows_numba if numba_enabled() else _fft_rows_numpy
    return kernel(flat, _bit_reversal(n), _twiddles(n)).reshape(x.shape)


def ifft(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.complex128)
    n = X.shape[-1]
    return np.conj(fft(np.conj(X))) / n


def dft_reference(x: np.ndarray) -> np.ndarray:
    """O(n^2) matrix DFT; slow but obviously correct."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x @ mat.T
