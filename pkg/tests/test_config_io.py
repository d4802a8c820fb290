import csv
import json

import numpy as np
import pytest

from evodiff.config import ConfigParseError, RunManifest, dumps, load_config, loads
from evodiff.errors import ConfigError, ValidationError
from evodiff.grid import Grid, StateField
from evodiff.io import (
    diagnostics_header,
    export_plotdata,
    read_diagnostics_csv,
    read_snapshot,
    read_snapshots,
    write_snapshot,
    write_trajectory,
)
from evodiff.solver import run

BRUSSELATOR = """
schema_version = 1

[growth]
kind = "isotropic-exponential"
n = 2
rho = 0.1
horizon = 1.0

[model]
builtin = "brusselator-surface"
constants = { alpha = 1.0, beta = 2.0 }
initial = ["1 + 0.1*cos(pi*x1)", "2 + 0.1*cos(pi*x2)"]

[grid]
extents = [1.0, 1.0]
nodes = [9, 9]

[time]
t_end = 0.05

[output]
snapshot_every = 10
"""


def test_round_trip(tmp_path):
    cfg = loads(BRUSSELATOR)
    again = loads(dumps(cfg))
    assert again == cfg and again.hash() == cfg.hash()
    path = tmp_path / "c.toml"
    path.write_text(BRUSSELATOR)
    assert load_config(path).hash() == cfg.hash()


def test_unknown_key_and_collected_errors():
    text = BRUSSELATOR.replace("t_end = 0.05", "t_end = 2.0\ncolour = 1")
    with pytest.raises(ConfigError) as exc:
        loads(text)
    errs = exc.value.errors
    assert any("time.colour: unknown key" in e for e in errs)
    assert any("exceeds growth.horizon" in e for e in errs)


def test_duplicate_key_position():
    text = BRUSSELATOR.replace("n = 2\n", "n = 2\nn = 3\n", 1)
    with pytest.raises(ConfigParseError) as exc:
        loads(text)
    assert exc.value.line == 7


def test_missing_table_file(tmp_path):
    text = BRUSSELATOR.replace('kind = "isotropic-exponential"', 'kind = "tabulated"\ntable = "nope.csv"')
    with pytest.raises(ConfigError, match="does not exist"):
        loads(text, tmp_path)


def test_run_config_and_manifest(tmp_path):
    cfg = loads(BRUSSELATOR)
    traj = run(cfg.run_config())
    assert traj.termination == "completed"
    man = RunManifest.from_run(cfg, traj)
    man.write(tmp_path / "manifest.json")
    back = RunManifest.read(tmp_path / "manifest.json")
    assert back.config_hash == cfg.hash() and back.termination == "completed"
    assert json.loads((tmp_path / "manifest.json").read_text())["deviations"]


def test_snapshot_bit_exact(tmp_path, rng):
    grid = Grid((1.0, 2.5), (5, 7))
    state = StateField(0.123456789, rng.normal(size=(3, 5, 7)), None)
    write_snapshot(tmp_path / "s.bin", state, grid)
    back, g2 = read_snapshot(tmp_path / "s.bin")
    assert back.t == state.t and np.array_equal(back.u, state.u)
    assert g2 == grid
    (tmp_path / "bad.bin").write_bytes(b"junk\n")
    with pytest.raises(ValidationError):
        read_snapshot(tmp_path / "bad.bin")


def test_trajectory_and_export_deterministic(tmp_path):
    traj = run(loads(BRUSSELATOR).run_config())
    write_trajectory(traj, tmp_path / "run")
    snaps, grid = read_snapshots(tmp_path / "run")
    assert len(snaps) == len(traj.snapshots)
    recs = read_diagnostics_csv(tmp_path / "run" / "diagnostics.csv")
    assert [r.row() for r in recs] == [[float(x) for x in r.row()] for r in traj.records]
    with open(tmp_path / "run" / "diagnostics.csv") as fh:
        assert next(csv.reader(fh)) == diagnostics_header(2)
    outputs = []
    for k in range(2):
        paths = []
        for what in ("diagnostics", "slice", "timeseries"):
            paths += export_plotdata(snaps, grid, what, tmp_path / f"out{k}", recs)
        outputs.append([p.read_bytes() for p in paths])
    assert outputs[0] == outputs[1]
    with pytest.raises(ValidationError):
        export_plotdata(snaps, grid, "movie", tmp_path)
