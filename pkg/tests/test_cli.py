"""Command-line front end: exit codes, outputs, determinism."""

import json
import os

import numpy as np
import pytest

from calcium_gspt.cli import run, write_atomic, write_csv


def test_usage_error_exit_code(capsys):
    assert run(["bogus-command"]) == 2
    assert run([]) == 2


def test_missing_params_file_exit_code(tmp_path, capsys):
    rc = run(["scale-report", "--params", str(tmp_path / "nope.json"),
              "--out", str(tmp_path)])
    assert rc == 2
    assert "not found" in capsys.readouterr().err


def test_bad_override_exit_code(tmp_path, capsys):
    assert run(["scale-report", "--set", "bogus=1",
                "--out", str(tmp_path)]) == 2


def test_analysis_error_exit_code(tmp_path, capsys):
    # a huge switching threshold destroys the slow-manifold landmarks
    rc = run(["analyze-r1", "--set", "K_tau=5.0", "--out", str(tmp_path)])
    assert rc == 1
    assert "analysis error" in capsys.readouterr().err


def test_scale_report_contents(tmp_path):
    assert run(["scale-report", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "scaling_report.json").read_text())
    assert data["a"]["a_1"] == pytest.approx(0.112, abs=1e-3)
    assert data["epsilon"] == 2.56e-6
    assert data["switch_scores"]["tau_h"]["score"] == 25.0


def test_simulate_trajectory_csv(tmp_path):
    out = tmp_path / "sim"
    assert run(["simulate", "--p", "0.09", "--t-max", "600000",
                "--out", str(out)]) == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,c,c_t,h"
    c = np.array([float(l.split(",")[1]) for l in lines[1:]])
    assert 0.4 <= c.max() <= 0.6
    # numbers carry full precision (17 significant digits)
    assert any(len(l.split(",")[1].split(".")[-1]) > 12 for l in lines[1:])


def test_analyze_r1_outputs(tmp_path):
    assert run(["analyze-r1", "--out", str(tmp_path)]) == 0
    lm = json.loads((tmp_path / "r1_landmarks.json").read_text())
    assert lm["c_f"] == pytest.approx(0.086, abs=5e-3)
    assert (tmp_path / "s1_curve.csv").exists()


def test_analyze_r2_outputs(tmp_path):
    assert run(["analyze-r2", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "r2_report.json").read_text())
    assert rep["folded_singularity"]["found"] is False
    assert rep["nondegeneracy"] == pytest.approx(256.0, abs=1.0)


def test_deterministic_byte_identical_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["scale-report", "--out", str(out), "--seed", "7"]) == 0
    assert (a / "scaling_report.json").read_bytes() \
        == (b / "scaling_report.json").read_bytes()


def test_write_atomic_leaves_no_temp_files(tmp_path):
    target = tmp_path / "x.json"
    write_atomic(str(target), "{}\n")
    assert target.read_text() == "{}\n"
    assert [p.name for p in tmp_path.iterdir()] == ["x.json"]


def test_write_csv_17_significant_digits(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(str(path), ["x"], [(1.0 / 3.0,)])
    assert path.read_text() == "x\n0.33333333333333331\n"
