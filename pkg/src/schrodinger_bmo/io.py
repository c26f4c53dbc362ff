"""CSV/JSON serialization of grid functions, measures and reports.

Grid functions serialize as flat CSV with one coordinate column per axis
followed by the value, rows in C order (last coordinate fastest), or as a
JSON object carrying the grid metadata header.  Atomic measures use rows
(y coordinates..., t, mass).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .carleson import AtomicMeasure
from .grid import Grid, GridFunction


def save_grid_function_csv(f: GridFunction, path, value_name: str = "value"):
    grid = f.grid
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{a}" for a in range(grid.n)] + [value_name])
        for point, value in zip(grid.points, f.values):
            writer.writerow([f"{c:.17g}" for c in point] + [f"{value:.17g}"])


def load_grid_function_csv(grid: Grid, path) -> GridFunction:
    values = np.loadtxt(path, delimiter=",", skiprows=1, usecols=grid.n)
    return GridFunction(grid, np.atleast_1d(values))


def save_grid_function_json(f: GridFunction, path):
    grid = f.grid
    payload = {
        "grid": {"n": grid.n, "m": grid.m, "half_width": grid.half_width},
        "values": f.values.tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def load_grid_function_json(path) -> GridFunction:
    payload = json.loads(Path(path).read_text())
    meta = payload["grid"]
    grid = Grid(meta["n"], meta["m"], meta["half_width"])
    return GridFunction(grid, np.asarray(payload["values"], dtype=float))


def save_measure_csv(mu: AtomicMeasure, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"y{a}" for a in range(mu.n)] + ["t", "mass"])
        for pos, t, mass in zip(mu.positions, mu.heights, mu.masses):
            writer.writerow([f"{c:.17g}" for c in pos] + [f"{t:.17g}", f"{mass:.17g}"])


def load_measure_csv(path) -> AtomicMeasure:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return AtomicMeasure.empty(1)
    n = data.shape[1] - 2
    return AtomicMeasure(data[:, :n], data[:, n], data[:, n + 1])


def save_kernel_csv(kernel, path):
    np.savetxt(path, kernel.matrix, delimiter=",")


def save_maximal_report(report, json_path, csv_path):
    """Maximal-function report: summary JSON plus a plot-ready P* CSV."""
    save_grid_function_csv(report.pstar, csv_path, value_name="pstar")
    payload = {
        "l1_norm": report.l1_norm,
        "t_levels": report.t_levels.tolist(),
        "attaining_level_histogram": np.bincount(
            report.attaining_level, minlength=len(report.t_levels)
        ).tolist(),
    }
    save_json(payload, json_path)


def save_json(payload: dict, path):
    Path(path).write_text(json.dumps(payload, indent=2, default=_coerce))


def _coerce(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")
