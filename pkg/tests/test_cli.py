import json

import numpy as np
import pytest

from ngrc_twin import cli
from ngrc_twin.dataset import load_run
from ngrc_twin.ngrc import load_model


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--out", out, "--quiet") == 0
    return out


def test_simulate_writes_1734_rows(sim_dir):
    lines = [ln for ln in (sim_dir / "run.csv").read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 1 + 1734
    assert lines[0].startswith("time,requested_speed")
    manifest = json.loads((sim_dir / "manifest-simulate.json").read_text())
    assert manifest["seed"] == 0 and "run.csv" in manifest["outputs"]


def test_simulate_deterministic(tmp_path, sim_dir):
    assert run("simulate", "--out", tmp_path, "--quiet") == 0
    assert (tmp_path / "run.csv").read_bytes() == (sim_dir / "run.csv").read_bytes()
    assert run("simulate", "--out", tmp_path / "b", "--seed", 1, "--quiet") == 0
    assert (tmp_path / "b" / "run.csv").read_bytes() != (sim_dir / "run.csv").read_bytes()


def test_simulate_zero_duration_is_usage_error(tmp_path):
    assert run("simulate", "--out", tmp_path, "--duration", 0, "--quiet") == cli.EXIT_USAGE


def test_bad_flag_is_usage_error(capsys):
    assert run("simulate", "--no-such-flag") == cli.EXIT_USAGE


def test_calibrate(tmp_path, capsys):
    pts = tmp_path / "pts.csv"
    pts.write_text("volts,newtons\n0,0\n1,10\n")
    assert run("calibrate", pts, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "slope" in out and "intercept" in out and "MSE" in out
    fit = json.loads((tmp_path / "calibration.json").read_text())["fit"]
    assert fit["slope"] == 10.0 and fit["intercept"] == 0.0 and fit["mse"] == 0.0
    bad = tmp_path / "bad.csv"
    bad.write_text("0,0\n1,x\n")
    assert run("calibrate", bad, "--out", tmp_path) == cli.EXIT_DATA


def test_train_accuracy_and_determinism(tmp_path, sim_dir):
    args = ["train", "--run", sim_dir / "run.csv", "-k", 1, "--alpha", 1e-5, "--quiet"]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    assert (tmp_path / "a" / "model.json").read_bytes() == (tmp_path / "b" / "model.json").read_bytes()
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["nrmse"] < 0.02
    assert report["metaparams"] == {"k": 1, "s": 1, "alpha": 1e-5}


def test_train_without_training_slices(tmp_path, sim_dir):
    assert run("train", "--run", sim_dir / "run.csv", "--whole", "--out", tmp_path, "--quiet") == cli.EXIT_USAGE


def test_predict_and_contract(tmp_path, sim_dir, capsys):
    assert run("train", "--run", sim_dir / "run.csv", "--out", tmp_path, "--quiet") == 0
    model = tmp_path / "model.json"
    assert run("predict", "--model", model, "--run", sim_dir / "run.csv", "--out", tmp_path / "p") == 0
    assert "NRMSE" in capsys.readouterr().out
    head = (tmp_path / "p" / "predictions.csv").read_text().splitlines()[:3]
    assert head[0] == "time,predicted_thrust,true_thrust"
    assert head[1].split(",")[1] == ""
    other = tmp_path / "other.csv"
    other.write_text("# run_id: x\ntime,requested_speed,thrust\n0.0,0.5,1\n0.1,0.6,2\n0.2,0.7,3\n")
    assert run("predict", "--model", model, "--run", other, "--out", tmp_path / "q", "--quiet") == cli.EXIT_CONTRACT


def test_cross_run_train(tmp_path):
    assert run("simulate", "--profile", "eccentric", "--seed", 1, "--out", tmp_path / "a", "--quiet") == 0
    assert run("simulate", "--profile", "ascending", "--seed", 2, "--egt-b0", 408, "--out", tmp_path / "b", "--quiet") == 0
    assert run("train", "--run", tmp_path / "a" / "run.csv", "--test-run", tmp_path / "b" / "run.csv",
               "--out", tmp_path / "t", "--quiet") == 0
    assert json.loads((tmp_path / "t" / "report.json").read_text())["nrmse"] < 0.05


def test_evaluate_and_benchmark(tmp_path, sim_dir):
    assert run("train", "--run", sim_dir / "run.csv", "--out", tmp_path, "--quiet") == 0
    model = tmp_path / "model.json"
    assert run("evaluate", "--model", model, "--run", sim_dir / "run.csv", "--out", tmp_path / "e", "--quiet") == 0
    ev = json.loads((tmp_path / "e" / "evaluation.json").read_text())
    assert ev["nrmse"] < 0.02 and "inference_time_per_step" not in ev
    assert run("benchmark", "--model", model, "--run", sim_dir / "run.csv", "--repeats", 3,
               "--out", tmp_path / "b", "--quiet") == 0
    bench = json.loads((tmp_path / "b" / "benchmark.json").read_text())
    assert bench["n_train"] == load_model(model).n_train and bench["step_time_us"] > 0


def test_gridsearch_singleton_equals_train(tmp_path, sim_dir):
    common = ["--run", sim_dir / "run.csv", "--quiet"]
    assert run("train", *common, "-k", 1, "-s", 1, "--alpha", 1e-5, "--out", tmp_path / "t") == 0
    assert run("gridsearch", *common, "--k-values", "1", "--s-values", "1", "--alpha-values", "1e-5",
               "--out", tmp_path / "g") == 0
    assert (tmp_path / "t" / "model.json").read_bytes() == (tmp_path / "g" / "best_model.json").read_bytes()
    assert len((tmp_path / "g" / "grid.csv").read_text().splitlines()) == 2


def test_gridsearch_full_grid_with_failures(tmp_path):
    short = tmp_path / "short.csv"
    rng = np.random.default_rng(0)
    x = rng.random(60).tolist()
    rows = "\n".join(f"{i * 0.1!r},{a!r},{2 * a * a + 1!r}" for i, a in enumerate(x))
    short.write_text(f"# run_id: short\ntime,x,thrust\n{rows}\n")
    assert run("gridsearch", "--run", short, "--inputs", "x", "--n-slices", 10, "--first", "train",
               "--out", tmp_path / "g", "--quiet") == 0
    grid = (tmp_path / "g" / "grid.csv").read_text().splitlines()
    assert len(grid) == 1 + 72
    assert any(",failed," in ln for ln in grid)


def test_config_file_and_manifest_replay(tmp_path, sim_dir):
    cfg = tmp_path / "train.cfg"
    cfg.write_text(f"run = {sim_dir / 'run.csv'}\nout = {tmp_path / 'c'}\nalpha = 1e-4\ninputs = requested_speed,actual_speed,egt,far\nquiet = true\n")
    assert run("train", "--config", cfg) == 0
    model = load_model(tmp_path / "c" / "model.json")
    assert model.metaparams.alpha == 1e-4
    manifest = tmp_path / "c" / "manifest-train.json"
    doc = json.loads(manifest.read_text())
    assert doc["config"]["alpha"] == 1e-4 and doc["seed"] == 0
    first = (tmp_path / "c" / "model.json").read_bytes()
    assert run("train", "--config", manifest) == 0
    assert (tmp_path / "c" / "model.json").read_bytes() == first
    doc2 = json.loads(manifest.read_text())
    assert doc2["outputs"] == doc["outputs"]
    # flags override config
    assert run("train", "--config", cfg, "--alpha", 1e-2, "--out", tmp_path / "d") == 0
    assert load_model(tmp_path / "d" / "model.json").metaparams.alpha == 1e-2
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense_key = 1\n")
    assert run("train", "--config", bad) == cli.EXIT_USAGE


def test_missing_file_is_usage_error(tmp_path):
    assert run("train", "--run", tmp_path / "nope.csv", "--out", tmp_path, "--quiet") == cli.EXIT_USAGE


def test_simulated_file_loads_as_aligned_run(sim_dir):
    ds = load_run(sim_dir / "run.csv").align()
    assert ds.length == 1734 and ds.rate == pytest.approx(1 / 0.015)
