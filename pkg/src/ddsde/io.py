"""Text serialization: fields and reports as JSON, measures, flows and tables as CSV.

Floats are written with ``repr`` so every round trip is bit-exact.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ContractError
from .fbm import TimeGrid
from .field import SpectralField
from .measure import EmpiricalMeasure, MeasureFlow


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, non-finite floats as strings)."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_field(field: SpectralField, path) -> Path:
    return write_json(field.to_dict(), path)


def read_field(path) -> SpectralField:
    return SpectralField.from_dict(read_json(path))


def write_table(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_table(path) -> tuple[list, list]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_measure(mu: EmpiricalMeasure, path) -> Path:
    """CSV with columns ``w, x_1, ..., x_d``."""
    cols = ["w"] + [f"x_{j + 1}" for j in range(mu.dim)]
    rows = [[float(w), *map(float, x)] for w, x in zip(mu.weights, mu.points)]
    return write_table(path, cols, rows)


def read_measure(path) -> EmpiricalMeasure:
    cols, rows = read_table(path)
    if not cols or cols[0] != "w":
        raise ContractError(f"{path}: first column must be 'w'")
    arr = np.array([[float(v) for v in r] for r in rows])
    return EmpiricalMeasure(arr[:, 1:], arr[:, 0])


def write_flow(flow: MeasureFlow, directory) -> Path:
    """One CSV per time index plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = len(str(len(flow) - 1))
    files = []
    for i, mu in enumerate(flow.measures):
        name = f"t_{i:0{width}d}.csv"
        write_measure(mu, directory / name)
        files.append(name)
    manifest = {"T": flow.grid.horizon, "n_steps": flow.grid.n_steps, "d": flow[0].dim,
                "times": flow.grid.times, "files": files}
    return write_json(manifest, directory / "manifest.json")


def read_flow(directory) -> MeasureFlow:
    directory = Path(directory)
    man = read_json(directory / "manifest.json")
    grid = TimeGrid(man["T"], man["n_steps"])
    return MeasureFlow(grid, [read_measure(directory / f) for f in man["files"]])


def write_ensemble(ensemble, path) -> Path:
    """CSV with columns ``particle, t, x_1, ..., x_d``."""
    tr = ensemble.trajectories
    t = ensemble.grid.times
    cols = ["particle", "t"] + [f"x_{j + 1}" for j in range(tr.shape[2])]
    rows = ([i, float(t[k]), *map(float, tr[i, k])] for i in range(tr.shape[0]) for k in range(tr.shape[1]))
    return write_table(path, cols, rows)
