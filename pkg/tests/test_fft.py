import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jacreg.numerics.fft import dft_reference, fft, ifft


@pytest.mark.parametrize("n", [1, 2, 4, 8, 64, 256])
def test_matches_numpy_fft(n, rng):
    x = rng.standard_normal((3, n)) + 1j * rng.standard_normal((3, n))
    np.testing.assert_allclose(fft(x), np.fft.fft(x), atol=1e-12 * n)


def test_matches_direct_dft(rng):
    x = rng.standard_normal(32)
    np.testing.assert_allclose(fft(x), dft_reference(x), atol=1e-12)


@pytest.mark.parametrize("flag", ["0", "1"])
def test_both_backends_agree(flag, monkeypatch, rng):
    monkeypatch.setenv("JACREG_NUMBA", flag)
    x = rng.standard_normal((4, 128))
    np.testing.assert_allclose(fft(x), np.fft.fft(x), atol=1e-11)
    np.testing.assert_allclose(ifft(fft(x)).real, x, atol=1e-13)


def test_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        fft(np.zeros(12))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 8), st.integers(0, 2**31 - 1))
def test_parseval(log_n, seed):
    n = 2**log_n
    x = np.random.default_rng(seed).standard_normal(n)
    X = fft(x)
    assert np.sum(np.abs(X) ** 2) == pytest.approx(n * np.sum(x * x), rel=1e-12, abs=1e-12)


def test_single_mode_lands_in_its_bin():
    n, k = 64, 5
    x = np.cos(2 * np.pi * k * np.arange(n) / n)
    X = fft(x)
    assert abs(X[k]) == pytest.approx(n / 2)
    assert abs(X[n - k]) == pytest.approx(n / 2)
    mask = np.ones(n, bool)
    mask[[k, n - k]] = False
    assert np.max(np.abs(X[mask])) < 1e-12
