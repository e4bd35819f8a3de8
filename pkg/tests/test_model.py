import numpy as np
import pytest

from jacreg.model import (
    LAYER_ORDER, MlpParams, TrueDynamicsModel, forward, init_params, mlp_rollout, model_jvp, param_count,
)
from jacreg.numerics import jvp


def test_init_shapes_and_bounds():
    p = init_params(0, 4, 32)
    assert p.dim == 4 and p.hidden == 32
    assert p.flat().size == param_count(4, 32)
    assert np.max(np.abs(p.W1)) <= np.sqrt(1 / 4)
    assert np.max(np.abs(p.W2)) <= np.sqrt(1 / 32)
    assert not np.any(p.b1) and not np.any(p.b3)


def test_init_is_seeded():
    np.testing.assert_array_equal(init_params(5, 3, 8).flat(), init_params(5, 3, 8).flat())
    assert not np.array_equal(init_params(5, 3, 8).flat(), init_params(6, 3, 8).flat())


def test_flat_round_trip_layer_order():
    p = init_params(1, 3, 5)
    q = MlpParams.from_flat(p.flat(), 3, 5)
    for k in LAYER_ORDER:
        np.testing.assert_array_equal(getattr(p, k), getattr(q, k))
    assert p.flat()[:15].reshape(5, 3).tolist() == p.W1.tolist()
    with pytest.raises(ValueError):
        MlpParams.from_flat(p.flat()[:-1], 3, 5)


def test_shape_validation():
    p = init_params(1, 3, 5).as_dict()
    p["b2"] = np.zeros(4)
    with pytest.raises(ValueError, match="b2"):
        MlpParams(**p)


def test_forward_by_hand():
    p = MlpParams(np.eye(2), np.array([0.0, -1.0]), np.eye(2), np.zeros(2), np.array([[1.0, 1.0]]).repeat(2, 0),
                  np.array([0.5, 0.0]))
    out = forward(p, np.array([2.0, 0.5]))
    # relu(2)=2, relu(-0.5)=0 -> sum 2
    np.testing.assert_allclose(out, [2.5, 2.0])


def test_explicit_jvp_matches_dual_propagation(small_mlp, rng):
    x = rng.standard_normal((6, 4))
    v = rng.standard_normal((6, 4))
    _, t = jvp(lambda u: forward(small_mlp, u), x, v)
    np.testing.assert_array_equal(model_jvp(small_mlp, x, v), t)


@pytest.mark.parametrize("flag", ["0", "1"])
def test_rollout_backends_agree(flag, small_mlp, monkeypatch):
    from jacreg.integrate import rollout

    monkeypatch.setenv("JACREG_NUMBA", flag)
    x0 = np.array([[0.5, 0.1, -0.2, 1.0], [1.0, 0.0, 0.0, 1.0]])
    out = mlp_rollout(small_mlp, x0, 0.01, 50)
    ref = np.stack([rollout(lambda u: forward(small_mlp, u), x, 0.01, 50).states for x in x0])
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("flag", ["0", "1"])
def test_rollout_marks_blowup_as_nan(flag, monkeypatch):
    monkeypatch.setenv("JACREG_NUMBA", flag)
    p = init_params(0, 2, 4)
    big = MlpParams(p.W1 * 1e3, p.b1 + 1e3, p.W2 * 1e3, p.b2 + 1e3, p.W3 * 1e3, p.b3)
    out = mlp_rollout(big, np.array([[1.0, 1.0], [0.0, 0.0]]), 1.0, 200)
    assert np.isnan(out[0, -1]).all()
    bad = np.flatnonzero(np.isnan(out[0, :, 0]))
    assert bad.size and np.all(np.isnan(out[0, bad[0]:]))


def test_true_dynamics_wrapper():
    m = TrueDynamicsModel("rb")
    x = np.array([0.3, 0.2, 0.9])
    v = np.eye(3)
    t = m.jvp(x[None], v)
    assert t.shape == (3, 3)
