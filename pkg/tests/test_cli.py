from __future__ import annotations

import numpy as np
import pytest

from gpseg.cli import main, run
from gpseg.fileio import import_field, read_report
from gpseg.grid import interval

MINIMAL = """\
[domain]
dim = 1
L = 3.141592653589793
n = 128

[params]
lambda = -1
mu = -1
beta = 50

[seed]
k = 2
"""

SOLVER_KEYS = ["status", "beta", "energy", "residual", "iterations", "segregation",
               "h1_u", "h1_v", "linf_u", "linf_v"]


def test_solve_minimal(tmp_path):
    assert run("solve", MINIMAL, tmp_path) == 0
    assert {p.name for p in tmp_path.iterdir()} == {"u.csv", "v.csv", "report.txt"}
    rep = read_report(tmp_path / "report.txt")[0]
    assert list(rep) == SOLVER_KEYS
    assert rep["status"] == "converged"
    assert float(rep["residual"]) <= 1e-9
    _, u = import_field(tmp_path / "u.csv", interval(np.pi, 128))
    assert np.min(u) > 0


def test_solve_deterministic(tmp_path):
    cfg = MINIMAL + "[analysis]\nmorse = true\nnodal = true\npohozaev = true\n"
    for d in ("a", "b"):
        assert run("solve", cfg, tmp_path / d) == 0
    for name in ("u.csv", "v.csv", "report.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rep = read_report(tmp_path / "a" / "report.txt")[0]
    assert rep["morse_index"] == "2" and rep["nullity"] == "0"
    assert "pohozaev_residual" in rep and "nodal_components" in rep


def test_continue_singleton_matches_solve(tmp_path):
    assert run("solve", MINIMAL, tmp_path / "s") == 0
    assert run("continue", MINIMAL, tmp_path / "c") == 0
    for name in ("u.csv", "v.csv", "report.txt"):
        assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()


def test_continue_branch(tmp_path):
    cfg = MINIMAL.replace("beta = 50", "schedule = 50, 100, 1000, 10000") + "[analysis]\ndecay_fit = true\n"
    assert run("continue", cfg, tmp_path) == 0
    blocks = read_report(tmp_path / "report.txt")
    assert [float(b["beta"]) for b in blocks] == [50.0, 100.0, 1000.0, 10000.0]
    assert (tmp_path / "report.txt").read_text().count("\n---\n") == 3
    assert float(blocks[-1]["decay_slope"]) < 0
    assert (tmp_path / "u_003.csv").read_bytes() == (tmp_path / "u.csv").read_bytes()
    assert len((tmp_path / "branch.csv").read_text().splitlines()) == 5


def test_analyze(tmp_path):
    assert run("solve", MINIMAL, tmp_path) == 0
    assert run("analyze", MINIMAL + "[analysis]\nmorse = true\n", tmp_path) == 0
    rep = read_report(tmp_path / "analysis.txt")[0]
    assert rep["status"] == "ok" and rep["morse_index"] == "2"
    solved = read_report(tmp_path / "report.txt")[0]
    assert rep["energy"] == solved["energy"]


def test_analyze_missing_fields(tmp_path, capsys):
    assert run("analyze", MINIMAL, tmp_path / "nothing") == 1
    assert "error:" in capsys.readouterr().err
    assert not (tmp_path / "nothing").exists()


def test_analyze_wrong_grid(tmp_path):
    assert run("solve", MINIMAL, tmp_path) == 0
    assert run("analyze", MINIMAL.replace("n = 128", "n = 100"), tmp_path) == 1


def test_config_error_writes_nothing(tmp_path, capsys):
    assert run("solve", MINIMAL.replace("beta = 50", "beta = fifty"), tmp_path / "o") == 1
    assert "line 9" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_nonconverged_exit_code(tmp_path):
    cfg = MINIMAL + "[solve]\nmax_newton_iters = 1\n"
    assert run("solve", cfg, tmp_path) == 2
    rep = read_report(tmp_path / "report.txt")[0]
    assert rep["status"] == "not_converged" and "error" in rep
    assert (tmp_path / "u.csv").exists()


def test_continue_nonconverged(tmp_path):
    cfg = MINIMAL.replace("beta = 50", "schedule = 50, 100") + "[solve]\nmax_newton_iters = 1\n"
    assert run("continue", cfg, tmp_path) == 2
    assert read_report(tmp_path / "report.txt")[0]["status"] == "not_converged"


def test_no_ray_maximum_is_failure(tmp_path):
    # a huge positive lambda pushes the ray maximum out of range
    cfg = MINIMAL.replace("lambda = -1", "lambda = 1e8").replace("mu = -1", "mu = 1e8")
    assert run("solve", cfg, tmp_path / "o") == 1


def test_eig(tmp_path):
    assert run("eig", MINIMAL, tmp_path) == 0
    lines = (tmp_path / "eigenvalues.csv").read_text().splitlines()
    assert lines[0] == "j,value" and len(lines) == 3
    h = np.pi / 129
    assert float(lines[2].split(",")[1]) == pytest.approx(4 * np.sin(h) ** 2 / h**2, rel=1e-12)


def test_probe_seed_override(tmp_path):
    cfg = MINIMAL.replace("k = 2", "k = 2\nsamples = 10")
    assert run("probe", cfg, tmp_path / "a", seed=4) == 0
    assert run("probe", cfg, tmp_path / "b", seed=4) == 0
    assert run("probe", cfg, tmp_path / "c", seed=5) == 0
    a, b, c = ((tmp_path / d / "probe.txt").read_bytes() for d in "abc")
    assert a == b and a != c
    assert read_report(tmp_path / "a" / "probe.txt")[0]["samples"] == "10"


def test_main_entry(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(MINIMAL)
    assert main(["eig", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert main(["eig", "--config", str(tmp_path / "missing.cfg")]) == 1
    with pytest.raises(SystemExit):
        main(["frobnicate", "--config", str(cfg)])
