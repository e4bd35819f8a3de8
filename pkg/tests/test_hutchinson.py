import numpy as np
import pytest

from jacreg.numerics import DirectionSampler, frobenius_sq, frobenius_sq_hutchinson
from jacreg.numerics.hutchinson import box_muller


def test_sampler_is_deterministic_and_advances():
    a, b = DirectionSampler(7, 5), DirectionSampler(7, 5)
    d1, d2 = a.draw(3), a.draw(3)
    np.testing.assert_array_equal(d1, b.draw(3))
    assert not np.array_equal(d1, d2)
    a.reset()
    np.testing.assert_array_equal(a.draw(3), d1)
    np.testing.assert_array_equal(a.directions(1, 3), d2)


def test_directions_are_standard_normal():
    z = DirectionSampler(0, 1).directions(0, 200_000).ravel()
    assert abs(z.mean()) < 0.01
    assert z.var() == pytest.approx(1.0, abs=0.01)
    assert np.mean(np.abs(z) < 1.0) == pytest.approx(0.6827, abs=0.005)


def test_box_muller_known_value():
    z = box_muller(np.array([1 - np.exp(-0.5)]), np.array([0.0]))
    np.testing.assert_allclose(z, [1.0, 0.0], atol=1e-15)


def test_odd_total_count():
    assert DirectionSampler(1, 3).directions(0, 3).shape == (3, 3)


def test_unbiased_for_identity():
    # ||I v||^2 averages to dim
    est = frobenius_sq_hutchinson(lambda V: V, DirectionSampler(2, 6), 20_000)
    assert est == pytest.approx(6.0, rel=0.03)


def test_exact_frobenius():
    assert frobenius_sq(np.array([[1.0, 2.0], [3.0, 4.0]])) == 30.0


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        DirectionSampler(0, 0)
    with pytest.raises(ValueError):
        DirectionSampler(0, 2, distribution="rademacher")
