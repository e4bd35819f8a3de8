import json

import numpy as np
import pytest

from jacreg.cli import main
from jacreg.io import read_checkpoint, read_csv, read_trajectory


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = {"profile": "desk", "system": "tb", "n_train": 2, "n_val": 1, "n_test": 2, "T_test": 5.0, "epochs": 2,
           "test_horizon": 300}
    (root / "tb.json").write_text(json.dumps(cfg))
    assert main(["generate", str(root / "tb.json"), "--out", str(root / "data")]) == 0
    return root


def test_generate_layout(dataset, capsys):
    data = dataset / "data"
    assert len(list((data / "train").glob("*.njrt"))) == 2
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["config"]["system"] == "tb" and manifest["seed"] == 0
    assert read_trajectory(data / "test" / "traj_00000.njrt").states.shape == (501, 4)


def test_generate_refuses_then_forces(dataset):
    cfg, out = str(dataset / "tb.json"), str(dataset / "data")
    before = (dataset / "data" / "train" / "traj_00001.njrt").read_bytes()
    assert main(["generate", cfg, "--out", out]) == 1
    assert main(["generate", cfg, "--out", out, "--force"]) == 0
    assert (dataset / "data" / "train" / "traj_00001.njrt").read_bytes() == before


def test_desk_config_writes_ten_train_files(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"profile": "desk", "system": "tb", "n_test": 1, "T_test": 1.0}))
    assert main(["generate", str(tmp_path / "c.json"), "--out", str(tmp_path / "d")]) == 0
    assert len(list((tmp_path / "d" / "train").glob("*.njrt"))) == 10


def test_missing_system_is_config_error(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"dt": 0.1}))
    assert main(["generate", str(tmp_path / "c.json"), "--out", str(tmp_path / "d")]) == 1
    assert "config.system: required" in capsys.readouterr().err


def test_train_eval_plot(dataset, tmp_path, caplog):
    cfg, data = str(dataset / "tb.json"), str(dataset / "data")
    assert main(["train", cfg, "--data", data, "--out", str(tmp_path / "run"), "--mode", "none",
                 "--lambda", "0.5"]) == 0
    assert "ignored" in caplog.text
    header, rows = read_csv(tmp_path / "run" / "epochs.csv")
    assert ",".join(header) == "epoch,traj_loss,reg_loss,total_loss,val_mse"
    assert len(rows) == 3
    p, meta = read_checkpoint(tmp_path / "run" / "model.njck")
    assert p.hidden == 64 and meta["system"] == "tb"

    assert main(["eval", str(tmp_path / "run" / "model.njck"), "--data", data, "--out", str(tmp_path / "ev"),
                 "--horizon", "100"]) == 0
    summary = json.loads((tmp_path / "ev" / "summary.json").read_text())
    for key in ("traj_mse", "eps_offline", "jac_error", "diverged_count"):
        assert key in summary
    assert len(read_csv(tmp_path / "ev" / "re_series.csv")[1]) == 101

    assert main(["eval", "--true-model", "--data", data, "--out", str(tmp_path / "truth")]) == 0
    re = np.array([float(r[2]) for r in read_csv(tmp_path / "truth" / "re_series.csv")[1]])
    assert np.all(re < 1e-6)

    assert main(["plot", str(tmp_path / "ev"), str(tmp_path / "truth"), "--labels", "model,truth",
                 "--out", str(tmp_path / "svg")]) == 0
    svg = (tmp_path / "svg" / "re.svg").read_text()
    assert svg.count("<polyline") == 2
    assert "footnote" in svg


def test_grid_writes_five_rows(dataset, tmp_path):
    cfg, data = str(dataset / "tb.json"), str(dataset / "data")
    assert main(["train", cfg, "--data", data, "--out", str(tmp_path / "g"), "--mode", "ad", "--grid",
                 "--epochs", "1"]) == 0
    header, rows = read_csv(tmp_path / "g" / "grid.csv")
    assert len(rows) == 5
    assert sum(r[-1] == "true" for r in rows) == 1


def test_eval_dimension_mismatch(dataset, tmp_path):
    from jacreg.io import write_checkpoint
    from jacreg.model import init_params

    write_checkpoint(tmp_path / "rb.njck", init_params(0, 3, 8), {"system": "rb"})
    assert main(["eval", str(tmp_path / "rb.njck"), "--data", str(dataset / "data"), "--out", str(tmp_path)]) == 1


def test_plot_empty_csv_is_error(tmp_path):
    run = tmp_path / "run"
    run.mkdir()
    for name in ("re_series.csv", "conservation.csv", "final_re.csv"):
        (run / name).write_text("")
    assert main(["plot", str(run), "--out", str(tmp_path / "svg")]) == 1


def test_exit_codes_for_usage_and_io(tmp_path):
    assert main(["frobnicate"]) == 1
    assert main(["train"]) == 1
    assert main(["eval", "x.njck", "--data", str(tmp_path / "missing"), "--out", str(tmp_path)]) == 3
    (tmp_path / "c.json").write_text("{not json")
    assert main(["generate", str(tmp_path / "c.json"), "--out", str(tmp_path / "d")]) == 1
    bad = tmp_path / "bad.njck"
    bad.write_bytes(b"garbage")
    (tmp_path / "d2").mkdir()
    assert main(["eval", str(bad), "--data", str(tmp_path / "d2"), "--out", str(tmp_path)]) == 3
