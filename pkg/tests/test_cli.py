import csv
import io
import json

import pytest

from evodiff.cli import main
from test_config_io import BRUSSELATOR


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(BRUSSELATOR)
    return path


def test_run_and_export(config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", str(config), "--out", str(out)]) == 0
    assert (out / "manifest.json").exists() and (out / "diagnostics.csv").exists()
    assert main(["export", str(out), "--what", "timeseries"]) == 0
    assert (out / "timeseries.csv").exists()
    assert "completed" in capsys.readouterr().out


def test_run_blowup_exit_code(tmp_path):
    path = tmp_path / "b.toml"
    path.write_text("""
[growth]
n = 1
horizon = 5.0
[model]
f = ["0"]
g = ["u1^2"]
d = [1.0]
initial = ["1"]
[grid]
extents = [1.0]
nodes = [21]
[time]
t_end = 5.0
""")
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 2


def test_config_errors_exit_one(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(BRUSSELATOR.replace("n = 2\n", "n = 2\nn = 2\n", 1))
    assert main(["check", str(path)]) == 1
    assert "line 7" in capsys.readouterr().err


def test_check_report(config, capsys):
    assert main(["check", str(config), "--samples", "500"]) == 0
    rep = json.loads(capsys.readouterr().out)
    names = [c["condition"] for c in rep["conditions"]]
    assert "V_L1" in names and "V_Poly" in names
    assert rep["compatibility"]["within_tol"] in (True, False)


def test_lyapunov(capsys):
    assert main(["lyapunov", "--point", "1", "1", "--theta", "2", "--D", "4", "--Dt", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["P"] == 21 and out["theta_threshold"] == 1.25


def test_kernel_cn(capsys):
    assert main(["kernel", "--op", "cn"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["n"] for r in rows] == ["1", "2", "3"]
    assert all(float(r["relative_error"]) < 1e-8 for r in rows)


def test_kernel_verify(capsys):
    assert main(["kernel", "--op", "verify-z0", "--n", "1"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    flags = {(r["mode"], r["coefficients"]): r["flagged"] for r in rows}
    assert flags[("standard", "kernel")] == "False" and flags[("4pi", "kernel")] == "True"


def test_kernel_density(capsys):
    assert main(["kernel", "--op", "density", "--nodes", "8", "--steps", "3"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert max(abs(float(r["residual"])) for r in rows) < 1e-8


def test_convergence_linear(capsys):
    assert main(["convergence", "linear"]) == 0
    assert "status: exact" in capsys.readouterr().out


def test_dual_check_small(capsys):
    assert main(["dual-check", "--nodes", "13", "--T", "0.05", "--d", "1", "0.5", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"]
