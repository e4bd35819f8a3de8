"""Command-line entry point: ``jacreg generate|train|eval|plot|bench``.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure,
3 file-system error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import SPLITS, GenerationError, chunk_array, generate, initial_condition_doc
from .dynamics import TRUE_JVP_SYSTEMS, SystemId
from .evaluate import evaluate
from .integrate import Trajectory
from .io import (
    FormatError, csv_bytes, load_config, read_checkpoint, read_csv, read_json, read_trajectory, write_checkpoint,
    write_csv, write_epoch_csv, write_json, write_trajectory,
)
from .losses import RegMode
from .model import TrueDynamicsModel
from .numerics import NumericFailure
from .plot import PlotError, histogram, line_plot, series_from_csv
from .train import LAMBDA_GRIDS, ConfigError, ExperimentConfig, GridSearchError, grid_search, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
log = logging.getLogger("jacreg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# -- dataset layout -------------------------------------------------------------


def traj_path(root: Path, split: str, i: int) -> Path:
    return root / split / f"traj_{i:05d}.njrt"


def load_split(root: Path, split: str) -> list[Trajectory]:
    files = sorted((root / split).glob("traj_*.njrt"))
    if not files:
        raise FileNotFoundError(f"no trajectory files in {root / split}")
    return [read_trajectory(f) for f in files]


def dataset_config(root: Path) -> ExperimentConfig:
    manifest = read_json(root / "manifest.json")
    return ExperimentConfig.from_dict(manifest["config"])


# -- commands -------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise UsageError(f"{out} already exists; pass --force to overwrite")
        for split in SPLITS:
            shutil.rmtree(out / split, ignore_errors=True)
    data = generate(cfg)
    counts = {}
    for split, ds in data.items():
        for i, traj in enumerate(ds.trajectories):
            write_trajectory(traj_path(out, split, i), traj)
        counts[split] = len(ds)
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "splits": {s: data[s].manifest for s in SPLITS},
        "initial_conditions": initial_condition_doc(cfg.system),
        "format": {"trajectory": "NJRT v1", "files": "<split>/traj_NNNNN.njrt"},
        "generator": f"jacreg {__version__}",
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    write_json(out / "manifest.json", manifest)
    for split in SPLITS:
        print(f"{split}: {counts[split]} trajectories")
    return EXIT_OK


def _chunks(cfg: ExperimentConfig, root: Path, mode: RegMode):
    lookahead = 1 if mode is RegMode.fd else 0
    tr = chunk_array(load_split(root, "train"), cfg, lookahead)
    va = chunk_array(load_split(root, "val"), cfg, 0)
    return tr, va


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    mode = RegMode.parse(args.mode) if args.mode else cfg.reg_mode
    lam = cfg.lam if args.lam is None else args.lam
    if args.lam is not None and args.lam < 0:
        raise ConfigError("--lambda: must be non-negative")
    if mode is RegMode.none and lam != 0.0:
        log.warning("lambda=%g is ignored with --mode none", lam)
        lam = 0.0
    if mode is RegMode.ad and cfg.system not in TRUE_JVP_SYSTEMS:
        raise ConfigError(f"--mode ad: no true dynamics for {cfg.system.short}")
    if args.epochs is not None:
        cfg = cfg.with_(epochs=args.epochs)
    cfg = cfg.with_(reg_mode=mode, lam=lam)
    root = Path(args.data)
    data_cfg = dataset_config(root)
    if data_cfg.system is not cfg.system:
        raise ConfigError(f"config.system: {cfg.system.short} does not match the dataset ({data_cfg.system.short})")
    tr, va = _chunks(cfg, root, mode)
    out = Path(args.out)

    if args.grid:
        if mode is RegMode.none:
            raise ConfigError("--grid needs --mode ad or fd")
        grid = cfg.lambda_grid or LAMBDA_GRIDS[(cfg.system, mode)]
        try:
            best, rows, results = grid_search(cfg, grid, tr, va)
        except GridSearchError as exc:
            _write_grid(out, exc.table, None)
            raise NumericFailure(str(exc)) from None
        _write_grid(out, rows, best)
        res = results[best]
        cfg = cfg.with_(lam=best)
        print(f"best lambda {best:g} (val_mse {res.best_val_mse:.6g})")
    else:
        res = train(cfg, tr, va)
    write_epoch_csv(out / "epochs.csv", res.records)
    write_checkpoint(out / "model.njck", res.params, {**cfg.to_dict(), "best_epoch": res.best_epoch})
    print(f"best epoch {res.best_epoch}, val_mse {res.best_val_mse:.6g}")
    if res.failed:
        log.error("training failed: %s", res.failure)
        return EXIT_NUMERIC
    return EXIT_OK


def _write_grid(out: Path, rows, best):
    write_csv(out / "grid.csv", ("lambda", "val_mse", "best_epoch", "failed", "selected"),
              [(r.lam, r.val_mse, r.best_epoch, str(r.failed).lower(), str(r.lam == best).lower()) for r in rows])


def cmd_eval(args) -> int:
    root = Path(args.data)
    data_cfg = dataset_config(root)
    test = load_split(root, "test")
    if args.true_model:
        model, cfg_dict = TrueDynamicsModel(data_cfg.system), data_cfg.to_dict()
        dim = test[0].dim
    else:
        model, cfg_dict = read_checkpoint(args.checkpoint)
        dim = model.dim
    system = SystemId.parse(cfg_dict.get("system", data_cfg.system))
    if system is not data_cfg.system or dim != test[0].dim:
        raise ConfigError(f"checkpoint is for {system.short} (dim {dim}) but the dataset holds "
                          f"{data_cfg.system.short} (dim {test[0].dim})")
    stride = data_cfg.stride
    states = np.stack([t.subsample(stride).states for t in test])
    horizon = args.horizon if args.horizon is not None else min(data_cfg.test_horizon, states.shape[1] - 1)
    if horizon > states.shape[1] - 1:
        raise ConfigError(f"--horizon: {horizon} exceeds the {states.shape[1] - 1} stored test steps")
    rep = evaluate(model, system, states, data_cfg.dt_model, horizon, V=data_cfg.eval_V, seed=data_cfg.seed)
    out = Path(args.out)
    step = np.arange(horizon + 1)
    write_csv(out / "re_series.csv", ("step", "t", "re_mean"),
              [(int(s), t, r) for s, (t, r) in zip(step, rep.re_series)])
    write_csv(out / "conservation.csv", ("step", "t", "cons_err_mean"),
              [(int(s), t, c) for s, (t, c) in zip(step, rep.cons_series)])
    write_csv(out / "final_re.csv", ("trajectory", "final_re", "divergence_step"),
              [(i, r, d) for i, (r, d) in enumerate(zip(rep.final_re_distribution, rep.divergence_steps))])
    write_json(out / "summary.json", {**rep.summary(), "horizon": horizon, "system": system.short})
    print(f"traj_mse {rep.traj_mse:.6g}  eps_offline {rep.eps_offline:.6g}  jac_error {rep.jac_error:.6g}  "
          f"diverged {rep.diverged_count}/{len(test)}")
    return EXIT_OK


def cmd_plot(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = [Path(r) for r in args.runs]
    labels = args.labels.split(",") if args.labels else [r.name for r in runs]
    if len(labels) != len(runs):
        raise UsageError("--labels must name every run")
    panels = [
        ("re_series.csv", "re.svg", "Relative error of the state", "R_e"),
        ("conservation.csv", "conservation.svg", "Relative conservation error", "error"),
    ]
    for src, dst, title, ylabel in panels:
        series = []
        for run, label in zip(runs, labels):
            header, rows = _read_plot_csv(run / src)
            s = series_from_csv(header, rows, label, header[-1])
            series.append(s)
        svg = line_plot(series, title, "step", ylabel, log_y=True)
        (out / dst).write_text(svg, encoding="utf-8")
    for run, label in zip(runs, labels):
        header, rows = _read_plot_csv(run / "final_re.csv")
        if not rows:
            raise PlotError(f"{run / 'final_re.csv'}: CSV has no data rows")
        vals = [float(r[header.index("final_re")]) for r in rows]
        svg = histogram(vals, args.bins, f"Final relative error ({label})", "R_e at the horizon")
        (out / f"final_re_{label}.svg").write_text(svg, encoding="utf-8")
    print(f"wrote plots to {out}")
    return EXIT_OK


def _read_plot_csv(path: Path):
    try:
        return read_csv(path)
    except FormatError as exc:
        raise PlotError(str(exc)) from None


def cmd_bench(args) -> int:
    from .bench import run_benchmarks

    rows = run_benchmarks(repeats=args.repeats)
    sys.stdout.write(csv_bytes(("kernel", "backend", "seconds"), rows).decode())
    return EXIT_OK


# -- wiring -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jacreg", description="Jacobian-regularised neural ODE experiments")
    p.add_argument("--version", action="version", version=f"jacreg {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="integrate ground-truth trajectories")
    g.add_argument("config")
    g.add_argument("--out", required=True)
    g.add_argument("--force", action="store_true")
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="train a model on a generated dataset")
    t.add_argument("config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--mode", choices=[m.value for m in RegMode])
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--grid", action="store_true", help="grid-search lambda over the configured grid")
    t.add_argument("--epochs", type=int)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="long-horizon evaluation on the test split")
    e.add_argument("checkpoint", nargs="?")
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--horizon", type=int)
    e.add_argument("--true-model", action="store_true", help="evaluate the exact dynamics instead of a checkpoint")
    e.set_defaults(fn=cmd_eval)

    pl = sub.add_parser("plot", help="render SVG panels from eval outputs")
    pl.add_argument("runs", nargs="+", help="eval output directories")
    pl.add_argument("--out", required=True)
    pl.add_argument("--labels")
    pl.add_argument("--bins", type=int, default=20)
    pl.set_defaults(fn=cmd_plot)

    b = sub.add_parser("bench", help="time numba kernels against the numpy fallback")
    b.add_argument("--repeats", type=int, default=3)
    b.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.INFO)
        if args.command == "eval" and not args.true_model and not args.checkpoint:
            raise UsageError("eval: a checkpoint is required unless --true-model is given")
        return args.fn(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, ConfigError, PlotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericFailure, GenerationError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError, KeyError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
