"""Text formats: field CSVs and ``key: value`` reports.

Floats are written with 17 significant digits (``%.16e``), which round-trips
every IEEE double exactly.

Report keys always appear in the order of :data:`REPORT_KEYS`:

    status, error, beta, energy, residual, iterations, morse_index, nullity,
    segregation, h1_u, h1_v, linf_u, linf_v, nodal_components, nodal_delta,
    pohozaev_residual, nehari_u, nehari_v, decay_slope, decay_r2,
    k, rho, samples, min_energy

Branch reports hold one block per beta, separated by a line ``---``.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import DimensionError
from .grid import Grid

REPORT_KEYS = (
    "status",
    "error",
    "beta",
    "energy",
    "residual",
    "iterations",
    "morse_index",
    "nullity",
    "segregation",
    "h1_u",
    "h1_v",
    "linf_u",
    "linf_v",
    "nodal_components",
    "nodal_delta",
    "pohozaev_residual",
    "nehari_u",
    "nehari_v",
    "decay_slope",
    "decay_r2",
    "k",
    "rho",
    "samples",
    "min_energy",
)
BLOCK_SEPARATOR = "---"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.16e}"
    return str(x).replace("\n", " ")


def export_field(grid: Grid, f: np.ndarray, path) -> Path:
    f = grid.check(f)
    path = Path(path)
    header = [f"x{a + 1}" for a in range(grid.dim)] + ["value"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for xs, val in zip(grid.coords, f):
            w.writerow([fmt(float(x)) for x in xs] + [fmt(float(val))])
    return path


def import_field(path, grid: Grid | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Read a field CSV; returns ``(coords, values)``, checked against ``grid`` if given."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][-1] != "value":
        raise DimensionError(f"{path}: missing 'x1[,x2],value' header")
    dim = len(rows[0]) - 1
    data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float).reshape(-1, dim + 1)
    coords, values = data[:, :dim], data[:, dim].copy()
    if grid is not None:
        if dim != grid.dim or values.size != grid.N:
            raise DimensionError(f"{path}: {values.size} nodes in {dim}D, grid has {grid.N} in {grid.dim}D")
        if not np.allclose(coords, grid.coords, rtol=0, atol=1e-12 * max(grid.domain.lengths)):
            raise DimensionError(f"{path}: node coordinates do not match the grid")
    return coords, values


def report_lines(record: dict) -> list[str]:
    unknown = set(record) - set(REPORT_KEYS)
    if unknown:
        raise KeyError(f"unknown report keys: {sorted(unknown)}")
    return [f"{k}: {fmt(record[k])}" for k in REPORT_KEYS if k in record]


def write_report(records, path) -> Path:
    """Write one record (dict) or a list of records as separator-delimited blocks."""
    if isinstance(records, dict):
        records = [records]
    lines: list[str] = []
    for i, rec in enumerate(records):
        if i:
            lines.append(BLOCK_SEPARATOR)
        lines.extend(report_lines(rec))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_report(path) -> list[dict[str, str]]:
    blocks: list[dict[str, str]] = [{}]
    for line in Path(path).read_text().splitlines():
        if line == BLOCK_SEPARATOR:
            blocks.append({})
        elif line:
            key, _, value = line.partition(": ")
            blocks[-1][key] = value
    return blocks
