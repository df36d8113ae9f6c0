import csv
import json

import numpy as np
import pytest

from crisp.cli import main
from crisp.geometry import sample_uniform_sphere
from crisp.simulate import SimDesign, generate


def write_points(path, points, y, truth=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        cols = [f"x{k + 1}" for k in range(points.shape[1])] + ["y"]
        w.writerow(cols + (["truth"] if truth is not None else []))
        for i in range(points.shape[0]):
            row = [repr(float(v)) for v in points[i]] + [repr(float(y[i]))]
            w.writerow(row + ([int(truth[i])] if truth is not None else []))


def test_simulate_outputs_and_determinism(tmp_path):
    args = ["simulate", "--dim", "2", "--n-list", "40,60", "--theta-list", "2", "--reps", "2", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("report.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "report.csv").read_text().splitlines()[0]
    assert header == "d,n,theta,metric,mean,sd,reps"
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["seed"] == 3
    assert manifest["kernel_backend"] in ("cython", "python")


@pytest.mark.parametrize("bad", [["--regions", "3"], ["--dim", "5"], ["--reps", "0"]])
def test_simulate_rejects_bad_designs(tmp_path, bad):
    args = ["simulate", "--dim", "2", "--n-list", "40", "--theta-list", "1", "--out", str(tmp_path)]
    assert main(args + bad) == 2


def test_detect_missing_value_column(tmp_path):
    p = tmp_path / "pts.csv"
    p.write_text("x1,x2,x3\n1,0,0\n")
    assert main(["detect", "--input", str(p), "--out", str(tmp_path / "o")]) == 2


def test_detect_rejects_non_unit_rows(tmp_path):
    p = tmp_path / "pts.csv"
    p.write_text("x1,x2,x3,y\n1,0,0,1\n0,1,0,2\n0,0,1.01,3\n")
    assert main(["detect", "--input", str(p), "--out", str(tmp_path / "o")]) == 2


def test_detect_flag_validation(tmp_path):
    p = tmp_path / "pts.csv"
    write_points(p, np.eye(3), np.arange(3.0))
    base = ["detect", "--input", str(p), "--out", str(tmp_path / "o")]
    assert main(base + ["--rss", "chi2:1.5"]) == 2
    assert main(base + ["--J", "zero"]) == 2
    assert main(base + ["--omega", "0"]) == 2
    assert main(base + ["--lambda-t", "-1"]) == 2


def test_detect_planted_regions(tmp_path):
    sim = generate(SimDesign(3, 800, 4.0, r=4), np.random.default_rng(5))
    p = tmp_path / "pts.csv"
    write_points(p, sim.ds.points, sim.ds.values, sim.labels)
    out = tmp_path / "o"
    assert main(["detect", "--input", str(p), "--out", str(out), "--seed", "1"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["truth_loss"] < 0.05
    regions = json.loads((out / "regions.json").read_text())
    assert len(regions) == 4
    with open(out / "assignments.csv") as fh:
        rows = list(csv.DictReader(fh))
    labels = np.array([int(r["region"]) for r in rows])
    assert [int(r["index"]) for r in rows] == list(range(800))
    sizes = sorted(np.bincount(labels)[1:].tolist())
    assert sizes == sorted(int(reg["n_inside"]) for reg in regions)


def test_detect_single_mode_and_thread_invariance(tmp_path, monkeypatch):
    sim = generate(SimDesign(2, 200, 3.0), np.random.default_rng(2))
    p = tmp_path / "pts.csv"
    write_points(p, sim.ds.points, sim.ds.values, sim.labels)
    assert main(["detect", "--input", str(p), "--mode", "single", "--out", str(tmp_path / "s")]) == 0
    assert json.loads((tmp_path / "s" / "manifest.json").read_text())["truth_loss"] < 0.05
    assert main(["detect", "--input", str(p), "--out", str(tmp_path / "t1"), "--threads", "1"]) == 0
    monkeypatch.setenv("CRISP_THREADS", "3")
    assert main(["detect", "--input", str(p), "--out", str(tmp_path / "t3")]) == 0
    assert json.loads((tmp_path / "t3" / "manifest.json").read_text())["config"]["threads"] == 3
    for name in ("regions.json", "assignments.csv"):
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t3" / name).read_bytes()


@pytest.mark.parametrize("value", ["0", "two", "-4"])
def test_invalid_thread_env(tmp_path, monkeypatch, value):
    p = tmp_path / "pts.csv"
    write_points(p, np.eye(3), np.arange(3.0))
    monkeypatch.setenv("CRISP_THREADS", value)
    assert main(["detect", "--input", str(p), "--out", str(tmp_path / "o")]) == 2


def test_detect_standardize_constant_values(tmp_path):
    p = tmp_path / "pts.csv"
    write_points(p, sample_uniform_sphere(np.random.default_rng(0), 3, 50), np.ones(50))
    assert main(["detect", "--input", str(p), "--standardize", "mst-mad",
                 "--out", str(tmp_path / "o")]) == 3


def _write_grid(path, fn, step=10.0):
    with open(path, "w") as fh:
        fh.write("lat,lon,value\n")
        for lat in np.arange(-90 + step / 2, 90, step):
            for lon in np.arange(-180 + step / 2, 180, step):
                fh.write(f"{lat},{lon},{fn(lat, lon)}\n")


def test_preprocess_outputs(tmp_path):
    rng = np.random.default_rng(0)
    g = tmp_path / "grid.csv"
    _write_grid(g, lambda lat, lon: rng.standard_normal(), step=1.0)
    out = tmp_path / "o"
    assert main(["preprocess", "--grid", str(g), "--sample-n", "300", "--out", str(out)]) == 0
    with open(out / "points.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 300 and list(rows[0]) == ["x1", "x2", "x3", "y"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["sigma_hat"] > 0 and manifest["n_dropped"] == 0
    # the written file feeds straight into detect
    assert main(["detect", "--input", str(out / "points.csv"), "--out", str(tmp_path / "d")]) == 0


def test_preprocess_constant_grid_is_degenerate(tmp_path):
    g = tmp_path / "grid.csv"
    _write_grid(g, lambda lat, lon: 2.5)
    assert main(["preprocess", "--grid", str(g), "--sample-n", "200", "--out", str(tmp_path / "o")]) == 3


def test_preprocess_input_errors(tmp_path):
    g = tmp_path / "grid.csv"
    _write_grid(g, lambda lat, lon: lat)
    assert main(["preprocess", "--grid", str(g), "--lat-min", "10", "--lat-max", "10",
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["preprocess", "--grid", str(tmp_path / "none.csv"), "--out", str(tmp_path / "o")]) == 2


def test_oracle_check_command(capsys):
    assert main(["oracle-check", "--dim", "2", "--n", "15", "--trials", "3"]) == 0
    assert "OK: 0 failing" in capsys.readouterr().out
    assert main(["oracle-check", "--dim", "3", "--n", "5", "--trials", "2"]) == 0
    assert main(["oracle-check", "--dim", "4"]) == 2


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as exc:
        main(["detect"])
    assert exc.value.code == 2
