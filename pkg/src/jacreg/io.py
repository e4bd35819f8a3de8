"""Binary trajectory/checkpoint files, JSON configs and CSV tables.

Every writer goes through a temporary file in the target directory followed by
``os.replace`` so a crash never leaves a half-written artifact behind.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .dynamics import SystemId
from .integrate import Trajectory
from .model import LAYER_ORDER, MlpParams
from .train import ExperimentConfig, TrainRecord

TRAJ_MAGIC = b"NJRT"
TRAJ_VERSION = 1
# magic, version u16, system tag u8, dim u32, steps u32, dt f64, t0 f64
TRAJ_HEADER = struct.Struct("<4sHBIIdd")

CKPT_MAGIC = b"NJCK"
CKPT_VERSION = 1
# magic, version u16, dim u32, hidden u32, json length u64
CKPT_HEADER = struct.Struct("<4sHIIQ")

EPOCH_HEADER = ("epoch", "traj_loss", "reg_loss", "total_loss", "val_mse")


class FormatError(ValueError):
    """A file does not match the expected binary layout or version."""


def atomic_write(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# -- trajectories -------------------------------------------------------------


def encode_trajectory(traj: Trajectory) -> bytes:
    states = np.ascontiguousarray(traj.states, dtype="<f8")
    steps, dim = states.shape
    header = TRAJ_HEADER.pack(TRAJ_MAGIC, TRAJ_VERSION, SystemId.parse(traj.system).value, dim, steps,
                              float(traj.dt), float(traj.t0))
    return header + states.tobytes()


def decode_trajectory(data: bytes) -> Trajectory:
    if len(data) < TRAJ_HEADER.size:
        raise FormatError("trajectory file is shorter than its header")
    magic, version, tag, dim, steps, dt, t0 = TRAJ_HEADER.unpack_from(data)
    if magic != TRAJ_MAGIC:
        raise FormatError(f"bad trajectory magic {magic!r}")
    if version != TRAJ_VERSION:
        raise FormatError(f"unsupported trajectory format version {version}")
    payload = memoryview(data)[TRAJ_HEADER.size:]
    if len(payload) != dim * steps * 8:
        raise FormatError(f"payload is {len(payload)} bytes, header implies {dim * steps * 8}")
    try:
        system = SystemId(tag)
    except ValueError:
        raise FormatError(f"unknown system tag {tag}") from None
    states = np.frombuffer(payload, dtype="<f8").reshape(steps, dim).astype(np.float64)
    return Trajectory(states, dt, t0, system)


def write_trajectory(path, traj: Trajectory) -> Path:
    return atomic_write(path, encode_trajectory(traj))


def read_trajectory(path) -> Trajectory:
    return decode_trajectory(Path(path).read_bytes())


# -- checkpoints --------------------------------------------------------------


def encode_checkpoint(params: MlpParams, config: dict | None = None) -> bytes:
    blob = json.dumps(config or {}, sort_keys=True).encode("utf-8")
    header = CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, params.dim, params.hidden, len(blob))
    payload = np.ascontiguousarray(params.flat(), dtype="<f8").tobytes()
    return header + payload + blob


def decode_checkpoint(data: bytes) -> tuple[MlpParams, dict]:
    if len(data) < CKPT_HEADER.size:
        raise FormatError("checkpoint is shorter than its header")
    magic, version, dim, hidden, n_json = CKPT_HEADER.unpack_from(data)
    if magic != CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint format version {version}")
    n_params = dim * hidden * 2 + hidden * hidden + 2 * hidden + dim
    start = CKPT_HEADER.size
    end = start + 8 * n_params
    if len(data) != end + n_json:
        raise FormatError("checkpoint length does not match its header")
    flat = np.frombuffer(data[start:end], dtype="<f8").astype(np.float64)
    try:
        config = json.loads(data[end:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"checkpoint config is not valid JSON: {exc}") from None
    return MlpParams.from_flat(flat, dim, hidden), config


def write_checkpoint(path, params: MlpParams, config: dict | None = None) -> Path:
    return atomic_write(path, encode_checkpoint(params, config))


def read_checkpoint(path) -> tuple[MlpParams, dict]:
    return decode_checkpoint(Path(path).read_bytes())


# -- JSON ---------------------------------------------------------------------


def dump_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n").encode("utf-8")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, SystemId):
        return o.short
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_json(path, obj) -> Path:
    return atomic_write(path, dump_json(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(read_json(path))


# -- CSV ----------------------------------------------------------------------


def fmt(x) -> str:
    """Shortest round-tripping text for a float (``repr``), ints as-is."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def write_csv(path, header, rows) -> Path:
    return atomic_write(path, csv_bytes(header, rows))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def epoch_rows(records: list[TrainRecord]):
    for r in records:
        yield (r.epoch, r.loss.traj, r.loss.reg, r.loss.total, r.val_mse)


def write_epoch_csv(path, records: list[TrainRecord]) -> Path:
    return write_csv(path, EPOCH_HEADER, epoch_rows(records))


__all__ = [
    "CKPT_MAGIC", "CKPT_VERSION", "EPOCH_HEADER", "FormatError", "LAYER_ORDER", "TRAJ_MAGIC", "TRAJ_VERSION",
    "atomic_write", "csv_bytes", "decode_checkpoint", "decode_trajectory", "dump_json", "encode_checkpoint",
    "encode_trajectory", "fmt", "load_config", "read_checkpoint", "read_csv", "read_json", "read_trajectory",
    "write_checkpoint", "write_csv", "write_epoch_csv", "write_json", "write_trajectory",
]
