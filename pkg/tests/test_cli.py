import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from mvgeostat.cli import main

THETA = "1,1,0.2,0.5,1,0.5"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    path = d / "sim.csv"
    assert run("simulate", "--n", 1600, "--theta", THETA, "--seed", 7, "--out", path) == 0
    return path


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    d = tmp_path_factory.mktemp("small")
    path = d / "small.csv"
    assert run("simulate", "--n", 100, "--theta", THETA, "--seed", 3, "--locations", "jittered_grid", "--out", path) == 0
    return path


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_simulate_shape_and_reproducibility(sim, tmp_path):
    rows = read_rows(sim)
    assert rows[0] == ["x", "y", "z1", "z2"]
    assert len(rows) == 1601
    again = tmp_path / "again.csv"
    assert run("simulate", "--n", 1600, "--theta", THETA, "--seed", 7, "--out", again) == 0
    assert again.read_bytes() == sim.read_bytes()


def test_manifest_regenerates_output(sim, tmp_path):
    man = json.loads(open(f"{sim}.manifest.json").read())
    assert man["command"] == "simulate" and man["seed"] == 7
    cfg = man["config"]
    out = tmp_path / "regen.csv"
    theta = ",".join(repr(v) for v in cfg["theta"])
    run("simulate", "--p", cfg["p"], "--n", cfg["n"], "--theta", theta, "--seed", man["seed"], "--locations", cfg["locations"], "--out", out)
    assert out.read_bytes() == sim.read_bytes()


def test_nonpositive_range_is_a_validation_error(tmp_path, capsys):
    assert run("simulate", "--n", 16, "--theta", "1,1,-0.2,0.5,1,0.5", "--out", tmp_path / "x.csv") == 2
    assert "range" in capsys.readouterr().err


def test_wrong_theta_length(tmp_path, capsys):
    assert run("simulate", "--n", 16, "--theta", "1,1,0.2", "--out", tmp_path / "x.csv") == 2
    assert "needs 6 values" in capsys.readouterr().err


def test_parse_error_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y,z1,z2\n0,0,1,2\n0.5,0.5,oops,1\n")
    assert run("estimate", "--data", bad, "--out", tmp_path / "f.json") == 2
    assert f"{bad}:3:" in capsys.readouterr().err
    bad.write_text("x,y,z1\n0,0,1\n0.5,0.5\n")
    assert run("estimate", "--data", bad, "--out", tmp_path / "f.json") == 2
    assert f"{bad}:3: expected 3 fields" in capsys.readouterr().err
    bad.write_text("a,b,z1\n0,0,1\n")
    assert run("estimate", "--data", bad, "--out", tmp_path / "f.json") == 2
    bad.write_text("x,y,z1\n0,0,nan\n")
    assert run("estimate", "--data", bad, "--out", tmp_path / "f.json") == 2


def test_missing_file_is_io_error(tmp_path):
    assert run("estimate", "--data", tmp_path / "absent.csv", "--out", tmp_path / "f.json") == 4


def test_unknown_backend(small, tmp_path):
    assert run("estimate", "--data", small, "--backend", "magic", "--out", tmp_path / "f.json") == 2


def test_estimate_json_and_representations(small, tmp_path):
    fits = {}
    for rep in ("I", "II"):
        out = tmp_path / f"fit{rep}.json"
        assert run("estimate", "--data", small, "--rep", rep, "--max-evals", 60, "--out", out) == 0
        fits[rep] = json.loads(out.read_text())
        assert (tmp_path / f"fit{rep}.json.manifest.json").exists()
    assert len(fits["I"]["theta_hat"]) == 6
    assert fits["I"]["loglik"] == pytest.approx(fits["II"]["loglik"], rel=1e-10)
    assert isinstance(fits["I"]["warnings"], list)


def test_estimate_with_approximation_and_detrend(small, tmp_path):
    out = tmp_path / "dst.json"
    assert run("estimate", "--data", small, "--backend", "dst:0.4", "--nb", 25, "--max-evals", 30, "--out", out) == 0
    assert json.loads(out.read_text())["backend"]["keep_fraction"] == 0.4
    out = tmp_path / "trend.json"
    assert run("estimate", "--data", small, "--detrend", "--max-evals", 30, "--out", out) == 0
    man = json.loads((tmp_path / "trend.json.manifest.json").read_text())
    assert np.asarray(man["config"]["detrend_coefficients"]).shape == (3, 2)
    assert run("estimate", "--data", small, "--backend", "tlr5", "--rep", "II", "--out", out) == 2


def test_geodesic_estimate(tmp_path):
    rng = np.random.default_rng(0)
    lon, lat = rng.uniform(40, 60, 40), rng.uniform(10, 25, 40)
    path = tmp_path / "geo.csv"
    with open(path, "w") as fh:
        fh.write("lon,lat,z1\n")
        for a, b, z in zip(lon, lat, rng.standard_normal(40)):
            fh.write(f"{a},{b},{z}\n")
    out = tmp_path / "geo.json"
    assert run("estimate", "--data", path, "--geodesic", "--max-evals", 30, "--out", out) == 0
    man = json.loads((tmp_path / "geo.json.manifest.json").read_text())
    assert man["config"]["range_bounds"][1] > 100.0


def test_predict_with_truth_and_variance(small, tmp_path):
    rows = read_rows(small)
    targets = tmp_path / "targets.csv"
    with open(targets, "w") as fh:
        fh.write("x,y,z1,z2\n")
        for r in rows[1:6]:
            fh.write(",".join(r) + "\n")
    out = tmp_path / "pred.csv"
    assert run("predict", "--data", small, "--targets", targets, "--theta", THETA, "--variance", "--out", out) == 0
    pred = np.array(read_rows(out)[1:], dtype=float)
    np.testing.assert_allclose(pred[:, 2:], np.array(rows[1:6], dtype=float)[:, 2:], atol=1e-8)
    assert json.loads((tmp_path / "pred.mspe.json").read_text())["mspe_avg"] < 1e-12
    assert len(read_rows(tmp_path / "pred.variance.csv")) == 6


def test_assess_zero_for_identical_parameters(small, tmp_path):
    targets = tmp_path / "t.csv"
    targets.write_text("x,y\n0.5013,0.4977\n0.2031,0.8012\n")
    out = tmp_path / "a.json"
    assert run("assess", "--data", small, "--targets", targets, "--theta-true", THETA, "--theta-approx", THETA, "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["mloe"] == 0.0 and doc["mmom"] == 0.0


@pytest.mark.filterwarnings("ignore::UserWarning", "ignore::RuntimeWarning")
def test_assess_degenerate_target_is_numerical_failure(small, tmp_path):
    first = read_rows(small)[1]
    targets = tmp_path / "t.csv"
    targets.write_text(f"x,y\n{first[0]},{first[1]}\n")
    args = ["assess", "--data", small, "--targets", targets, "--theta-true", THETA, "--theta-approx", "1,1,0.1,0.5,1,0.5"]
    assert run(*args, "--out", tmp_path / "a.json") == 3
    assert run(*args, "--skip-degenerate", "--out", tmp_path / "b.json") == 0


def test_rankmap_monotone_across_accuracies(tmp_path):
    out = tmp_path / "rm"
    assert run("rankmap", "--theta", "1,1,0.09,0.5,1,0.5", "--n", 400, "--nb", 100, "--out-dir", out) == 0
    ranks = [np.array(read_rows(out / f"rankmap_{e}.csv")[1:], dtype=float) for e in ("1e-05", "1e-07", "1e-09")]
    assert np.all(ranks[0] <= ranks[1]) and np.all(ranks[1] <= ranks[2])
    summary = json.loads((out / "summary.json").read_text())
    assert [s["eps"] for s in summary] == [1e-5, 1e-7, 1e-9]
    assert (out / "manifest.json").exists()


def test_bench_csv(tmp_path):
    out = tmp_path / "bench.csv"
    assert run("bench", "--n", "64,100", "--backends", "exact,tlr9", "--nb", 50, "--out", out) == 0
    rows = read_rows(out)
    assert rows[0] == ["N", "backend", "nb", "loglik", "seconds"]
    assert len(rows) == 5
    exact = {r[0]: float(r[3]) for r in rows[1:] if r[1] == "exact"}
    tlr = {r[0]: float(r[3]) for r in rows[1:] if r[1] == "tlr9"}
    for n in exact:
        assert tlr[n] == pytest.approx(exact[n], rel=1e-8)


def test_experiment_command(tmp_path):
    out = tmp_path / "exp"
    assert run("experiment", "--id", 1, "--replicates", 1, "--n", 64, "--betas", "0,0.5", "--out-dir", out) == 0
    assert {p.name for p in out.iterdir()} == {"mspe.csv", "mspe_summary.csv", "manifest.json"}


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "mvgeostat.cli", "simulate", "--n", "9", "--theta", "1,0.2,0.5", "--p", "2"],
        cwd=tmp_path,
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
    assert "needs 6 values" in proc.stderr
