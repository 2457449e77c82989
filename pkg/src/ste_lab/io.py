"""CSV signal files, JSON results and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InputError
from .signal_lab import TimeSeries


def fmt(v: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(v), ".17g")


def read_signal_csv(path, fs: float) -> list[TimeSeries]:
    """One column per channel, header row of labels."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not rows:
        raise InputError(f"{path} is empty")
    labels = [h.strip() for h in rows[0]]
    if len(set(labels)) != len(labels) or any(not h for h in labels):
        raise InputError(f"{path}: header must hold unique, non-empty channel labels")
    body = np.empty((len(rows) - 1, len(labels)))
    for i, row in enumerate(rows[1:]):
        if len(row) != len(labels):
            raise InputError(f"{path}: data row {i + 1} has {len(row)} fields, expected {len(labels)}")
        try:
            body[i] = [float(c) for c in row]
        except ValueError:
            raise InputError(f"{path}: non-numeric cell in data row {i + 1}") from None
        if not np.all(np.isfinite(body[i])):
            raise InputError(f"{path}: NaN or infinite cell in data row {i + 1}")
    return [TimeSeries(body[:, j].copy(), fs, lab) for j, lab in enumerate(labels)]


def write_signal_csv(path, series: list[TimeSeries]):
    lengths = {len(s) for s in series}
    if len(lengths) != 1:
        raise InputError("channels must have equal length")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([s.label for s in series])
        for row in zip(*(s.values for s in series)):
            w.writerow([fmt(v) for v in row])


def _clean(obj):
    # JSON has no NaN; numpy scalars are not serializable
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def write_rows_csv(path, rows: list[dict], columns: list[str]):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r.get(c) is None else fmt(r[c]) if isinstance(r[c], float) else r[c]
                        for c in columns])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    seed: int
    version: str = __version__
    python: str = field(default_factory=platform.python_version)
    numpy: str = np.__version__
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    started: str = ""
    wall_seconds: float = 0.0
    failures: list = field(default_factory=list)

    def start(self):
        self.started = datetime.now(timezone.utc).isoformat(timespec="seconds")
        self._t0 = time.perf_counter()
        return self

    def add_input(self, path):
        self.inputs[str(path)] = sha256_file(path)

    def finish(self, outputs):
        for p in outputs:
            self.outputs[str(p)] = sha256_file(p)
        self.wall_seconds = round(time.perf_counter() - getattr(self, "_t0", time.perf_counter()), 3)

    def to_dict(self):
        return asdict(self)

    def write(self, path):
        write_json(path, self.to_dict())


def manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")

