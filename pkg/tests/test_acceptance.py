"""Acceptance suite: each test checks one numbered criterion at its stated
tolerance and records a PASS/FAIL line shown in the pytest terminal summary."""

import json
import math
import time

import numpy as np
import pytest

from jacreg.cli import main as cli_main
from jacreg.datagen import InitialConditionSpec, chunk_array, generate, sample_initial
from jacreg.dynamics import DEFAULT_GRID, SystemId, conserved
from jacreg.evaluate import divergence_step, gronwall_bound, jacobian_error, jacobian_norms, relative_error
from jacreg.integrate import Trajectory, etdrk4_rollout, integrate_ode, rollout
from jacreg.io import decode_checkpoint, decode_trajectory, encode_checkpoint, encode_trajectory
from jacreg.losses import loss_ad, loss_fd
from jacreg.model import MlpParams, TrueDynamicsModel, forward, init_params, mlp_rollout, model_jvp
from jacreg.numerics import DirectionSampler, frobenius_sq, frobenius_sq_hutchinson, grad, jvp
from jacreg.train import desk_profile, grid_search, train

from conftest import central_diff_grad, record_criterion


def test_c01_jvp_matches_central_differences():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for i in range(50):
        hidden = int(rng.integers(16, 65))
        n = int(rng.integers(2, 9))
        p = init_params(1000 + i, n, hidden)
        p = MlpParams(p.W1, rng.standard_normal(hidden) * 0.1, p.W2, rng.standard_normal(hidden) * 0.1, p.W3, p.b3)
        x, v = rng.standard_normal(n), rng.standard_normal(n)
        _, t = jvp(lambda u: forward(p, u), x, v)
        h = 1e-5
        fd = (forward(p, x + h * v) - forward(p, x - h * v)) / (2 * h)
        worst = max(worst, np.linalg.norm(t - fd) / np.linalg.norm(fd))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 5.0
    record_criterion(1, ok, f"max rel err {worst:.2e} (< 1e-6), {elapsed:.2f}s (< 5s)")
    assert ok


def _per_param_rel(g: dict, num: dict) -> float:
    worst = 0.0
    for k in g:
        a, b = np.ravel(g[k]), np.ravel(num[k])
        scale = np.maximum(np.abs(a), np.abs(b))
        live = scale > 1e-8
        # entries whose true derivative is zero must agree to roundoff
        assert np.all(np.abs(a[~live] - b[~live]) < 1e-8)
        if live.any():
            worst = max(worst, float(np.max(np.abs(a[live] - b[live]) / scale[live])))
    return worst


def test_c02_nested_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    p = init_params(7, 3, 2)
    params = {k: v.copy() for k, v in p.as_dict().items()}
    params["b1"] = np.array([0.3, 0.2])
    params["b2"] = np.array([0.25, 0.35])
    x = rng.standard_normal((5, 3))
    v = rng.standard_normal((5, 3))

    def jvp_sq(q):
        t = model_jvp(MlpParams(**q), x, v)
        return (t * t).sum()

    _, g = grad(jvp_sq, params)
    num = central_diff_grad(lambda q: float(np.asarray(jvp_sq(q))), params)
    err_jvp = _per_param_rel(g, num)

    t = np.arange(7) * 0.1
    traj = np.stack([np.sin(1.3 * t), np.cos(0.9 * t) + 0.3 * t * t, np.exp(-0.5 * t)], axis=-1)
    x0, x1, x2 = traj[:-2], traj[1:-1], traj[2:]

    def fd_loss(q):
        return loss_fd(MlpParams(**q), x0, x1, x2, 0.1)

    _, g = grad(fd_loss, params)
    num = central_diff_grad(lambda q: float(np.asarray(fd_loss(q))), params)
    err_fd = _per_param_rel(g, num)
    elapsed = time.perf_counter() - t0
    ok = err_jvp < 1e-4 and err_fd < 1e-4 and elapsed < 10.0
    record_criterion(2, ok, f"||J v||^2 grad rel err {err_jvp:.2e}, loss_fd grad rel err {err_fd:.2e} "
                            f"(< 1e-4), {elapsed:.2f}s")
    assert ok


def test_c03_hutchinson_estimate():
    t0 = time.perf_counter()
    A = np.random.default_rng(3).standard_normal((8, 8))
    exact = frobenius_sq(A)
    est_big = frobenius_sq_hutchinson(lambda V: V @ A.T, DirectionSampler(11, 8), 10_000)
    est_small = frobenius_sq_hutchinson(lambda V: V @ A.T, DirectionSampler(11, 8), 100)
    err_big, err_small = abs(est_big - exact) / exact, abs(est_small - exact) / exact
    elapsed = time.perf_counter() - t0
    ok = err_big < 0.05 and err_big < err_small and elapsed < 2.0
    record_criterion(3, ok, f"rel err 1e4 dirs {err_big:.3%} (< 5%), 1e2 dirs {err_small:.3%}, {elapsed:.2f}s")
    assert ok


def test_c04_fd_loss_vanishes_with_dt():
    model = lambda x: -x  # noqa: E731
    values = []
    for dt in (0.1, 0.05, 0.025):
        t = np.arange(12) * dt
        x = np.exp(-t)[:, None] * np.array([1.0, -0.5])
        values.append(float(loss_fd(model, x[:-2], x[1:-1], x[2:], dt)))
    ok = values[0] > values[1] > values[2] and values[2] < values[0] / 4
    record_criterion(4, ok, "loss_fd at dt=0.1/0.05/0.025: " + ", ".join(f"{v:.3e}" for v in values))
    assert ok


def test_c05_rk4_order():
    errs = []
    for n in (10, 20, 40, 80):
        tr = rollout(lambda x: -x, np.array([1.0]), 1.0 / n, n)
        errs.append(abs(tr.states[-1, 0] - math.exp(-1.0)))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    ok = all(3.8 <= o <= 4.2 for o in orders)
    record_criterion(5, ok, "empirical orders " + ", ".join(f"{o:.3f}" for o in orders) + " (in [3.8, 4.2])")
    assert ok


def test_c06_ground_truth_conservation():
    t0 = time.perf_counter()
    drifts = {}
    for sys, T in (("tb", 8.0), ("rb", 15.0)):
        spec = InitialConditionSpec(sys, 0, "test")
        x0 = np.stack([sample_initial(spec, i) for i in range(20)])
        out = integrate_ode(sys, x0, 0.01, int(round(T / 0.01)))
        q = conserved(sys, out)
        drifts[sys] = float(np.max(np.abs(q - q[:, :1]) / np.abs(q[:, :1])))
    spec = InitialConditionSpec("ks", 0, "test")
    u0 = np.stack([sample_initial(spec, i) for i in range(4)])
    u = etdrk4_rollout(u0, DEFAULT_GRID, 0.2, 500)
    drifts["ks"] = float(np.max(np.abs(u.mean(axis=-1))))
    elapsed = time.perf_counter() - t0
    ok = all(d < 1e-6 for d in drifts.values()) and elapsed < 30.0
    record_criterion(6, ok, f"TB {drifts['tb']:.1e}, RB {drifts['rb']:.1e}, KS mean {drifts['ks']:.1e} (< 1e-6), "
                            f"{elapsed:.1f}s")
    assert ok


def test_c07_ks_linear_dispersion():
    g = DEFAULT_GRID
    k = 2 * np.pi * 2 / 64
    u0 = 1e-6 * np.cos(k * g.x)
    out = etdrk4_rollout(u0, g, 0.2, 10)
    t = 10 * 0.2
    amp = 2 * abs(np.fft.fft(out[-1])[2]) / g.n_points
    expected = 1e-6 * math.exp((k**2 - k**4) * t)
    rel = abs(amp / expected - 1)
    ok = rel < 0.01
    record_criterion(7, ok, f"growth {amp / 1e-6:.6f} vs exp((k^2-k^4)t) {expected / 1e-6:.6f}, rel err {rel:.1e}")
    assert ok


def test_c08_gronwall_bound_holds():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(10):
        a = rng.uniform(-2.0, 2.0)
        b = a + rng.choice([-1, 1]) * rng.uniform(0.01, 0.5)
        if abs(b) < 1e-3:
            b += 0.1
        x0 = rng.uniform(0.5, 2.0)
        dt, n = 0.01, 100
        x = rollout(lambda u: a * u, np.array([x0]), dt, n).states[:, 0]
        xt = rollout(lambda u: b * u, np.array([x0]), dt, n).states[:, 0]
        eps_inf = float(np.max(np.abs((b - a) * x)))
        bound = gronwall_bound(eps_inf, abs(b), dt * np.arange(n + 1))
        gap = np.abs(x - xt)
        assert np.all(gap <= bound)
        worst = max(worst, float(np.max(gap[1:] / bound[1:])))
    record_criterion(8, True, f"gap/bound <= {worst:.3f} at every step of 10 pairs")


def test_c09_norm_sandwich():
    rng = np.random.default_rng(9)
    for _ in range(100):
        A, B = rng.standard_normal((2, 6, 6))
        assert abs(np.linalg.norm(A) - np.linalg.norm(B)) <= np.linalg.norm(A - B) + 1e-12
    cfg = desk_profile("tb").with_(n_train=1, n_val=1, n_test=5, T_test=10.0)
    test = np.concatenate([t.states for t in generate(cfg)["test"].trajectories])
    a, b, d = jacobian_norms(init_params(0, 4, 64), "tb", test)
    ok = bool(np.all(np.abs(a - b) <= d * (1 + 1e-12)))
    record_criterion(9, ok, f"100 matrix pairs and {test.shape[0]} TB test states satisfy |‖A‖-‖B‖| <= ‖A-B‖")
    assert ok


def test_c10_loss_identities_for_true_model():
    rng = np.random.default_rng(10)
    worst = 0.0
    for sys, make in (("tb", lambda: rng.uniform(0.3, 1.5, 4) * rng.choice([-1, 1], 4)),
                      ("rb", lambda: rng.standard_normal(3))):
        x = np.stack([make() for _ in range(100)])
        m = TrueDynamicsModel(sys)
        dirs = DirectionSampler(0, x.shape[1]).draw(10)
        worst = max(worst, abs(float(loss_ad(m, SystemId.parse(sys), x, dirs))), jacobian_error(m, sys, x))
    ok = worst < 1e-20
    record_criterion(10, ok, f"max |loss_ad|, |jacobian_error| = {worst:.1e} (< 1e-20)")
    assert ok


# -- trend reproduction ----------------------------------------------------------

TREND_SEEDS = (0, 1, 2)
TREND_GRID = [1e-12, 5e-13, 1e-13]
TREND_HORIZON = 4000


def _median_divergence(params, test_states, dt):
    pred = mlp_rollout(params, test_states[:, 0], dt, TREND_HORIZON)
    re = relative_error(pred, test_states[:, : TREND_HORIZON + 1])
    return float(np.median(divergence_step(re)))


@pytest.fixture(scope="module")
def trend_runs():
    out = {}
    t0 = time.perf_counter()
    for seed in TREND_SEEDS:
        cfg = desk_profile("tb").with_(seed=seed)
        assert (cfg.hidden, cfg.n_train, cfg.epochs, cfg.rollout, cfg.n_test) == (64, 10, 300, 2, 20)
        data = generate(cfg)
        train_tr, val_tr = data["train"].trajectories, data["val"].trajectories
        va = chunk_array(val_tr, cfg)
        test = np.stack([t.states for t in data["test"].trajectories])
        base = train(cfg, chunk_array(train_tr, cfg), va)
        lam_ad, _, res_ad = grid_search(cfg.with_(reg_mode="ad"), TREND_GRID, chunk_array(train_tr, cfg), va)
        lam_fd, _, res_fd = grid_search(cfg.with_(reg_mode="fd"), TREND_GRID, chunk_array(train_tr, cfg, 1), va)
        out[seed] = {
            "base": _median_divergence(base.params, test, cfg.dt_model),
            "ad": _median_divergence(res_ad[lam_ad].params, test, cfg.dt_model),
            "fd": _median_divergence(res_fd[lam_fd].params, test, cfg.dt_model),
            "lam_ad": lam_ad,
            "lam_fd": lam_fd,
        }
    out["elapsed"] = time.perf_counter() - t0
    return out


@pytest.mark.slow
def test_c11_regularisation_delays_divergence(trend_runs):
    ad_pass = fd_pass = 0
    parts = []
    for seed in TREND_SEEDS:
        r = trend_runs[seed]
        ad_ratio, fd_ratio = r["ad"] / r["base"], r["fd"] / r["base"]
        ad_pass += ad_ratio >= 2.0
        fd_pass += fd_ratio >= 1.5
        parts.append(f"seed {seed}: base {r['base']:.0f}, AD {r['ad']:.0f} (x{ad_ratio:.2f}, lam {r['lam_ad']:g}), "
                     f"FD {r['fd']:.0f} (x{fd_ratio:.2f}, lam {r['lam_fd']:g})")
    ok = ad_pass >= 2 and fd_pass >= 2
    record_criterion(11, ok, f"AD >=2x in {ad_pass}/3, FD >=1.5x in {fd_pass}/3 seeds; "
                             f"{trend_runs['elapsed'] / 60:.1f} min; " + "; ".join(parts))
    assert ok


def test_c12_determinism_and_round_trips(tmp_path):
    cfg = {"profile": "desk", "system": "tb", "n_train": 2, "n_val": 1, "n_test": 1, "T_test": 1.0, "epochs": 3}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert cli_main(["generate", str(tmp_path / "c.json"), "--out", str(tmp_path / "d")]) == 0
    csvs = []
    for run in ("a", "b"):
        assert cli_main(["train", str(tmp_path / "c.json"), "--data", str(tmp_path / "d"), "--out",
                         str(tmp_path / run), "--mode", "ad", "--lambda", "1e-3"]) == 0
        csvs.append((tmp_path / run / "epochs.csv").read_bytes())
    same_csv = csvs[0] == csvs[1]
    same_ckpt = (tmp_path / "a" / "model.njck").read_bytes() == (tmp_path / "b" / "model.njck").read_bytes()

    rng = np.random.default_rng(12)
    t = Trajectory(rng.standard_normal((50, 4)), 0.01, 3.0, SystemId.TwoBody)
    back = decode_trajectory(encode_trajectory(t))
    traj_ok = back.states.tobytes() == t.states.tobytes() and (back.dt, back.t0) == (t.dt, t.t0)
    ckpt_bytes = (tmp_path / "a" / "model.njck").read_bytes()
    params, meta = decode_checkpoint(ckpt_bytes)
    ckpt_ok = encode_checkpoint(params, meta) == ckpt_bytes
    ok = same_csv and same_ckpt and traj_ok and ckpt_ok
    record_criterion(12, ok, f"epoch CSVs identical: {same_csv}, checkpoints identical: {same_ckpt}, "
                             f"NJRT round-trip: {traj_ok}, NJCK round-trip: {ckpt_ok}")
    assert ok
