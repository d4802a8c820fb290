"""Snapshots, diagnostics CSV and plot-data export.

Snapshot files are a single ASCII header line followed by the raw
little-endian float64 field in C order::

    evodiff v1 n=2 m=3 N=33,33 L=1.0,1.0 t=0.25
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .grid import Grid, StateField
from .solver import DiagnosticsRecord

MAGIC = "evodiff v1"
_HEADER = re.compile(
    r"^evodiff v1 n=(\d+) m=(\d+) N=([\d,]+) L=([^ ]+) t=(\S+)$"
)
EXPORTS = ("diagnostics", "slice", "timeseries")


def _fmt(x):
    return repr(float(x))


def write_snapshot(path, state, grid):
    u = np.ascontiguousarray(state.u, dtype="<f8")
    if u.shape[1:] != grid.shape:
        raise ValidationError("state does not match grid")
    header = (
        f"{MAGIC} n={grid.n} m={u.shape[0]} N={','.join(map(str, grid.nodes))} "
        f"L={','.join(_fmt(e) for e in grid.extents)} t={_fmt(state.t)}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(u.tobytes(order="C"))
    return Path(path)


def read_snapshot(path):
    """Return ``(StateField, Grid)`` reproduced bit-exactly from ``path``."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").rstrip("\n")
        payload = fh.read()
    match = _HEADER.match(header)
    if not match:
        raise ValidationError(f"{path}: not an evodiff snapshot")
    n, m = int(match[1]), int(match[2])
    nodes = tuple(int(k) for k in match[3].split(","))
    extents = tuple(float(e) for e in match[4].split(","))
    if len(nodes) != n:
        raise ValidationError(f"{path}: header dimension mismatch")
    grid = Grid(extents, nodes)
    u = np.frombuffer(payload, dtype="<f8")
    if u.size != m * int(np.prod(nodes)):
        raise ValidationError(f"{path}: payload has {u.size} values, expected {m * np.prod(nodes)}")
    return StateField(float(match[5]), u.reshape((m,) + nodes).astype(float), None), grid


def diagnostics_header(m):
    return (
        ["t"]
        + [f"L1_omega_{i + 1}" for i in range(m)]
        + [f"L1_gamma_{i + 1}" for i in range(m)]
        + ["sup", "min", "evolving_mass", "lyapunov_P", "conservation_residual"]
    )


def write_diagnostics_csv(records, path):
    if not records:
        raise ValidationError("no diagnostics records to write")
    m = len(records[0].L1_omega)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(diagnostics_header(m))
        for r in records:
            w.writerow([_fmt(x) for x in r.row()])
    return Path(path)


def read_diagnostics_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    m = (len(header) - 6) // 2
    out = []
    for row in body:
        v = [float(x) for x in row]
        out.append(DiagnosticsRecord(v[0], np.array(v[1:1 + m]), np.array(v[1 + m:1 + 2 * m]),
                                     *v[1 + 2 * m:]))
    return out


def write_trajectory(trajectory, directory):
    """Snapshots ``snap_00000.bin ...`` and ``diagnostics.csv`` under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, snap in enumerate(trajectory.snapshots):
        paths.append(write_snapshot(directory / f"snap_{k:05d}.bin", snap, trajectory.grid))
    if trajectory.records:
        paths.append(write_diagnostics_csv(trajectory.records, directory / "diagnostics.csv"))
    return paths


def read_snapshots(directory):
    files = sorted(Path(directory).glob("snap_*.bin"))
    if not files:
        raise ValidationError(f"no snapshots in {directory}")
    pairs = [read_snapshot(f) for f in files]
    return [p[0] for p in pairs], pairs[0][1]


def export_plotdata(snapshots, grid, what, directory, records=None, axis=0):
    """Write plot-ready CSV files and return their paths.

    ``"diagnostics"`` rewrites the diagnostics table; ``"slice"`` writes, for
    each component, the line through the grid centre along ``axis`` with one
    column per snapshot time; ``"timeseries"`` writes per-component mean,
    sup and min against time.
    """
    if what not in EXPORTS:
        raise ValidationError(f"unknown export selector {what!r}; choose from {EXPORTS}")
    if not snapshots:
        raise ValidationError("trajectory is empty")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if what == "diagnostics":
        if not records:
            raise ValidationError("no diagnostics records to export")
        return [write_diagnostics_csv(records, directory / "plot_diagnostics.csv")]
    m = snapshots[0].u.shape[0]
    paths = []
    if what == "slice":
        if not 0 <= axis < grid.n:
            raise ValidationError(f"axis must lie in [0, {grid.n})")
        idx = [k // 2 for k in grid.nodes]
        idx[axis] = slice(None)
        for i in range(m):
            path = directory / f"slice_axis{axis}_u{i + 1}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([f"x{axis + 1}"] + [f"t={_fmt(s.t)}" for s in snapshots])
                cols = [s.u[i][tuple(idx)] for s in snapshots]
                for j, x in enumerate(grid.coords[axis]):
                    w.writerow([_fmt(x)] + [_fmt(c[j]) for c in cols])
            paths.append(path)
        return paths
    path = directory / "timeseries.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["t"]
        for i in range(m):
            head += [f"mean_u{i + 1}", f"sup_u{i + 1}", f"min_u{i + 1}"]
        w.writerow(head)
        vol = grid.volume
        for s in snapshots:
            row = [_fmt(s.t)]
            for ui in s.u:
                row += [_fmt(float(np.sum(grid.weights * ui)) / vol), _fmt(ui.max()), _fmt(ui.min())]
            w.writerow(row)
    return [path]
