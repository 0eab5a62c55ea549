from __future__ import annotations

import json

import numpy as np
import pytest

from torus_nodal.cli import main
from torus_nodal.ensemble import load_grid


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_lattice(capsys):
    code, out = run(capsys, "lattice", "--dim", "2", "--energy", "25", "--orbits")
    data = json.loads(out)
    assert code == 0 and data["multiplicity"] == 12 and len(data["frequencies"]) == 12
    assert data["orbits"] == [{"representative": [0, 5], "size": 4}, {"representative": [3, 4], "size": 8}]
    code, out = run(capsys, "lattice", "--dim", "2", "--energy", "5", "--format", "csv")
    assert len(out.strip().splitlines()) == 9


def test_sample_grid_nodal(tmp_path, capsys):
    f = tmp_path / "f.json"
    assert main(["sample", "--dim", "2", "--energy", "25", "--seed", "3", "--out", str(f)]) == 0
    assert main(["grid", "--in", str(f), "--grid", "32", "--out", str(tmp_path / "g.bin")]) == 0
    assert load_grid(tmp_path / "g.bin").shape == (32, 32)
    capsys.readouterr()
    code, out = run(capsys, "nodal", "--in", str(f), "--mesh", str(tmp_path / "mesh.txt"))
    est = json.loads(out)
    assert code == 0 and est["method"] == "marching" and est["volume"] > 0
    assert (tmp_path / "mesh.txt").stat().st_size > 0
    code, out = run(capsys, "nodal", "--in", str(f), "--method", "smoothed", "--eps", "0.05")
    assert json.loads(out)["epsilon"] == 0.05


def test_kernel_and_singular(capsys):
    code, out = run(capsys, "kernel", "--dim", "2", "--energy", "25", "--z", "0.1,0.2", "--mc", "2000")
    data = json.loads(out)
    assert code == 0 and data["value"] > 0 and data["config"]["z"] == [0.1, 0.2]
    code, out = run(capsys, "singular", "--dim", "2", "--energy", "25")
    data = json.loads(out)
    assert data["cubes"] == 5 and data["measure"] >= 1 / 25


def test_moments(tmp_path, capsys):
    out = tmp_path / "m.json"
    assert main(["moments", "--dim", "2", "--energy", "5", "--grid", "8", "--mc-per-point", "200",
                 "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert {"value", "std_error", "skipped_mass", "config"} <= data.keys()


def test_experiment(tmp_path, capsys):
    code, out = run(capsys, "experiment", "expectation", "--energies", "5", "--samples", "5",
                    "--out", str(tmp_path))
    assert code == 0 and json.loads(out)["summaries"][0]["samples"] == 5
    assert (tmp_path / "samples.csv").exists()


def test_errors_exit_nonzero(capsys):
    assert main(["kernel", "--dim", "2", "--energy", "25", "--z", "0,0", "--mc", "10"]) == 2
    assert "error" in capsys.readouterr().err
