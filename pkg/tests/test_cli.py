import json

import pytest

from slowfast_gl.cli import main


def test_selftest_exit_zero(tmp_path, capsys):
    assert main(["--study", "selftest", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "selftest" in out and (tmp_path / "report.csv").exists()
    assert json.loads((tmp_path / "report.json").read_text())["metadata"]["passed"] is True


def test_missing_config_exit_two(tmp_path, capsys):
    path = tmp_path / "nope.cfg"
    assert main(["--config", str(path), "--study", "selftest"]) == 2
    assert str(path) in capsys.readouterr().err


def test_hypothesis_violation_exit_two(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("model.eta = 100\n")
    assert main(["--config", str(cfg), "--study", "selftest"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_bad_flag_exit_two(capsys):
    assert main(["--study", "nonsense"]) == 2
    assert main(["--eps", "0.1,0.5", "--study", "convergence"]) == 2


def test_nonfinite_exit_three(tmp_path, capsys):
    cfg = tmp_path / "blow.cfg"
    cfg.write_text("noise.sigma1 = 1e9\ngrid.n_modes = 4\ngrid.t_end = 0.01\ngrid.stride = 1\n")
    assert main(["--config", str(cfg), "--study", "moments", "--eps", "0.5", "--samples", "2",
                 "--out", str(tmp_path / "o")]) == 3
    assert "NonFinite" in capsys.readouterr().err
    meta = json.loads((tmp_path / "o" / "report.json").read_text())["metadata"]
    assert meta["status"] == "aborted"


def test_identical_runs_identical_bytes(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("grid.n_modes = 8\ngrid.t_end = 0.2\n")
    args = ["--config", str(cfg), "--study", "convergence", "--eps", "0.5,0.1", "--samples", "10", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_delta_flag(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("grid.n_modes = 8\ngrid.t_end = 0.1\n")
    assert main(["--config", str(cfg), "--study", "khasminskii", "--eps", "0.1", "--delta", "0.05,0.025",
                 "--samples", "3", "--out", str(tmp_path / "k")]) == 0
    lines = (tmp_path / "k" / "report.csv").read_text().splitlines()
    assert len(lines) == 5


def test_module_entry_point():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "slowfast_gl", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "--study" in r.stdout
