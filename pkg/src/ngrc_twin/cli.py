"""Command-line entry point: ``ngrc-twin <command> [options]``.

Every option can also come from ``--config FILE``. A config file is either
a ``key = value`` file (keys are the long option names with dashes or
underscores, values are JSON literals or bare strings) or a manifest JSON
written by a previous command, in which case its recorded configuration
is replayed. Command-line flags override the config file.

Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 data-format
error, 4 numeric error, 5 model/data contract error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, calibration, dataset, engine_sim, evaluation, ngrc
from .errors import TwinError, UsageError

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_CONTRACT = 0, 1, 2, 3, 4, 5

SIM_INPUTS = ["requested_speed", "actual_speed", "egt", "far"]

DEFAULTS = {
    "out": "out",
    "seed": 0,
    "quiet": False,
    # simulate
    "profile": "default",
    "duration": None,
    "dt": 0.015,
    "noise_sigma": 0.005,
    "egt_b0": None,
    "steps": 8,
    "run_id": None,
    # data / model
    "run": None,
    "test_run": None,
    "inputs": SIM_INPUTS,
    "target": "thrust",
    "rate": None,
    "calibration": None,
    "voltage_channel": None,
    "k": 1,
    "s": 1,
    "alpha": 1e-5,
    "n_slices": 9,
    "pattern": "alternating",
    "first": "test",
    "whole": False,
    # gridsearch
    "k_values": [1, 2, 3],
    "s_values": [1, 2, 3],
    "alpha_values": [10.0**e for e in range(-8, 0)],
    "workers": 1,
    # benchmark
    "repeats": 31,
    "train_budget_ms": 100.0,
    "step_budget_us": 100.0,
    # predict / calibrate
    "model": None,
    "points": None,
}

RUN_KEYS = {"run", "test_run", "inputs", "target", "rate", "calibration", "voltage_channel", "out", "seed", "quiet"}
SLICE_KEYS = {"n_slices", "pattern", "first", "whole"}
COMMAND_KEYS = {
    "simulate": {"out", "seed", "quiet", "profile", "duration", "dt", "noise_sigma", "egt_b0", "steps", "run_id"},
    "calibrate": {"out", "seed", "quiet", "points"},
    "train": RUN_KEYS | SLICE_KEYS | {"k", "s", "alpha"},
    "predict": RUN_KEYS | {"model"},
    "evaluate": RUN_KEYS | SLICE_KEYS | {"model"},
    "gridsearch": RUN_KEYS | SLICE_KEYS | {"k_values", "s_values", "alpha_values", "workers"},
    "benchmark": RUN_KEYS | SLICE_KEYS | {"model", "repeats", "train_budget_ms", "step_budget_us"},
}


# ---------------------------------------------------------------------------
# config handling


def _literal(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def read_config(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        return dict(doc.get("config", doc))
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string("[pipeline]\n" + text if not text.lstrip().startswith("[") else text)
    cfg = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            cfg[key.replace("-", "_")] = _literal(value)
    return cfg


def _csv_list(conv):
    def parse(text):
        return [conv(v) for v in text.split(",") if v.strip()]

    return parse


def _coerce_list(value, conv):
    if value is None:
        return None
    if isinstance(value, str):
        return _csv_list(conv)(value)
    if isinstance(value, (list, tuple)):
        return [conv(v) for v in value]
    return [conv(value)]


def resolve(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the config file and explicit flags."""
    keys = COMMAND_KEYS[args.command]
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(cfg) - set(DEFAULTS) - {"command"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key in sorted(keys):
        value = DEFAULTS[key]
        if key in cfg:
            value = cfg[key]
        flag = getattr(args, key, None)
        if flag is not None:
            value = flag
        out[key] = value
    for key, conv in (("inputs", str), ("k_values", int), ("s_values", int), ("alpha_values", float)):
        if key in out:
            out[key] = _coerce_list(out[key], conv)
    return out


# ---------------------------------------------------------------------------
# helpers


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: Path, command: str, cfg: dict, outputs: dict, inputs=(), timing=None, extra=None) -> Path:
    manifest = {
        "tool": "ngrc-twin",
        "version": __version__,
        "command": command,
        "seed": cfg.get("seed"),
        "config": {"command": command, **cfg},
        "inputs": {str(p): _sha256(p) for p in inputs if p},
        "outputs": {name: _sha256(out / name) for name in outputs},
        "timing": timing or {},
    }
    if extra:
        manifest.update(extra)
    path = out / f"manifest-{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _echo(cfg, msg):
    if not cfg.get("quiet"):
        print(msg)


def _outdir(cfg) -> Path:
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _load_dataset(path, cfg) -> dataset.RunDataset:
    if path is None:
        raise UsageError("--run is required")
    raw = dataset.load_run(path)
    if cfg.get("calibration"):
        if not cfg.get("voltage_channel"):
            raise UsageError("--calibration requires --voltage-channel")
        doc = json.loads(Path(cfg["calibration"]).read_text(encoding="utf-8"))
        fit = calibration.CalibrationFit.from_dict(doc.get("fit", doc))
        raw = calibration.calibrate_channel(raw, fit, cfg["voltage_channel"], cfg["target"])
    return raw.align(cfg.get("rate"))


def _slices(ds, cfg) -> dataset.SliceSpec:
    if cfg.get("whole"):
        return dataset.SliceSpec((dataset.Slice(0, ds.length, dataset.TEST),), ds.length)
    return dataset.make_slices(ds.length, int(cfg["n_slices"]), cfg["pattern"], seed=cfg["seed"], first=cfg["first"])


def _train_and_report(cfg, out: Path, meta: ngrc.Metaparameters, model_name: str, command: str, extra_outputs=(),
                      extra_manifest=None) -> int:
    ds = _load_dataset(cfg["run"], cfg)
    if cfg.get("test_run"):
        train_slices = None
        test_ds = _load_dataset(cfg["test_run"], cfg)
        test_slices = dataset.SliceSpec((dataset.Slice(0, test_ds.length, dataset.TEST),), test_ds.length)
    else:
        train_slices = _slices(ds, cfg)
        if not train_slices.train:
            raise UsageError("slice settings produce no training slices")
        test_ds, test_slices = ds, train_slices
    model = ngrc.fit_model(ds, train_slices, cfg["inputs"], cfg["target"], meta)
    report = evaluation.evaluate(model, test_ds, test_slices)
    ngrc.save_model(model, out / model_name, include_timing=False)
    doc = report.to_dict()
    timing = {"train_time": doc.pop("train_time"), "inference_time_per_step": doc.pop("inference_time_per_step")}
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    evaluation.write_prediction_csv(evaluation.prediction_rows(model, test_ds, test_slices), out / "predictions.csv")
    _echo(cfg, f"k={meta.k} s={meta.s} alpha={meta.alpha:g}  d={model.d}  n_train={model.n_train}")
    _echo(cfg, f"test NRMSE = {100 * report.nrmse:.3f}%  (n_test={report.n_test})")
    _write_manifest(out, command, cfg, [model_name, "predictions.csv", *extra_outputs],
                    inputs=[cfg["run"], cfg.get("test_run"), cfg.get("calibration")],
                    timing=timing,
                    extra=extra_manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg) -> int:
    profile = engine_sim.default_profile() if cfg["profile"] == "default" else \
        engine_sim.profile_library(cfg["profile"], seed=cfg["seed"], steps=int(cfg["steps"]))
    duration = profile.duration if cfg["duration"] is None else float(cfg["duration"])
    if duration <= 0:
        raise UsageError("duration must be > 0")
    base = engine_sim.EngineParams()
    egt = base.egt_coeffs if cfg["egt_b0"] is None else (base.egt_coeffs[0], base.egt_coeffs[1], float(cfg["egt_b0"]))
    params = engine_sim.EngineParams(dt=float(cfg["dt"]), noise_sigma=float(cfg["noise_sigma"]), egt_coeffs=egt,
                                     seed=int(cfg["seed"]))
    run = engine_sim.simulate(profile, params, duration)
    out = _outdir(cfg)
    run_id = cfg["run_id"] or f"sim-{cfg['profile']}-seed{cfg['seed']}"
    ds = dataset.RunDataset(run_id, 1.0 / params.dt, run.columns(),
                            {"source": "surrogate", "profile": cfg["profile"], "seed": cfg["seed"]},
                            engine_sim.SimRun.UNITS)
    path = out / "run.csv"
    dataset.save_run(ds, path, time=run.time)
    _write_manifest(out, "simulate", cfg, ["run.csv"],
                    extra={"engine_params": params.to_dict(), "profile": profile.to_dict()})
    _echo(cfg, f"wrote {path} ({len(run)} samples, {duration:g} s at dt={params.dt:g} s)")
    return EXIT_OK



def cmd_calibrate(cfg) -> int:
    if not cfg.get("points"):
        raise UsageError("calibrate needs a points CSV (volts,newtons)")
    points = calibration.load_points(cfg["points"])
    fit = calibration.fit_calibration(points)
    out = _outdir(cfg)
    doc = {"fit": fit.to_dict(), "points": [[p.mean_voltage, p.applied_force, p.n_samples] for p in points]}
    (out / "calibration.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    _write_manifest(out, "calibrate", cfg, ["calibration.json"], inputs=[cfg["points"]])
    _echo(cfg, f"slope     = {fit.slope:.6g} N/V")
    _echo(cfg, f"intercept = {fit.intercept:.6g} N")
    _echo(cfg, f"MSE       = {fit.mse:.6g} N^2  ({fit.n_points} points)")
    return EXIT_OK


def cmd_train(cfg) -> int:
    meta = ngrc.Metaparameters(int(cfg["k"]), int(cfg["s"]), float(cfg["alpha"]))
    return _train_and_report(cfg, _outdir(cfg), meta, "model.json", "train", extra_outputs=["report.json"])


def cmd_predict(cfg) -> int:
    if not cfg.get("model"):
        raise UsageError("predict needs --model")
    model = ngrc.load_model(cfg["model"])
    ds = _load_dataset(cfg["run"], {**cfg, "target": model.target_channel})
    out = _outdir(cfg)
    has_truth = model.target_channel in ds.channels
    rows = evaluation.prediction_rows(model, ds)
    evaluation.write_prediction_csv(rows, out / "predictions.csv", with_truth=has_truth, with_label=False)
    score = None
    if has_truth:
        p = np.array([r[2] for r in rows])
        t = np.array([r[1] for r in rows])
        ok = ~np.isnan(p)
        score = evaluation.nrmse(p[ok], t[ok])
        _echo(cfg, f"NRMSE = {100 * score:.3f}%  over {int(ok.sum())} steps")
    _write_manifest(out, "predict", cfg, ["predictions.csv"], inputs=[cfg["model"], cfg["run"]],
                    extra={"nrmse": score})
    return EXIT_OK


def cmd_evaluate(cfg) -> int:
    if not cfg.get("model"):
        raise UsageError("evaluate needs --model")
    model = ngrc.load_model(cfg["model"])
    ds = _load_dataset(cfg["run"], {**cfg, "target": model.target_channel})
    report = evaluation.evaluate(model, ds, _slices(ds, cfg))
    out = _outdir(cfg)
    doc = report.to_dict()
    timing = {"inference_time_per_step": doc.pop("inference_time_per_step"), "train_time": doc.pop("train_time")}
    (out / "evaluation.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    _echo(cfg, f"test NRMSE = {100 * report.nrmse:.3f}%  (n_test={report.n_test})")
    _write_manifest(out, "evaluate", cfg, ["evaluation.json"], inputs=[cfg["model"], cfg["run"]], timing=timing)
    return EXIT_OK


def cmd_gridsearch(cfg) -> int:
    grid = evaluation.GridSpec(tuple(cfg["k_values"]), tuple(cfg["s_values"]), tuple(cfg["alpha_values"]))
    ds = _load_dataset(cfg["run"], cfg)
    slices = _slices(ds, cfg)
    best, table = evaluation.grid_search(ds, slices, grid, cfg["inputs"], cfg["target"], workers=int(cfg["workers"]))
    out = _outdir(cfg)
    (out / "grid.csv").write_text(evaluation.grid_table_csv(table), encoding="utf-8")
    (out / "grid.json").write_text(evaluation.grid_table_json(table) + "\n", encoding="utf-8")
    n_failed = sum(r.status == "failed" for r in table)
    _echo(cfg, f"{len(table)} combinations evaluated, {n_failed} failed")
    if best is None:
        print("no grid combination could be trained", file=sys.stderr)
        return EXIT_NUMERIC
    return _train_and_report(cfg, out, best, "best_model.json", "gridsearch",
                             extra_outputs=["grid.csv", "grid.json"], extra_manifest={"best": best.to_dict()})


def cmd_benchmark(cfg) -> int:
    if not cfg.get("model"):
        raise UsageError("benchmark needs --model")
    model = ngrc.load_model(cfg["model"])
    ds = _load_dataset(cfg["run"], {**cfg, "target": model.target_channel})
    slices = None if cfg.get("whole") else _slices(ds, cfg)
    budget = evaluation.TimingBudget(cfg["train_budget_ms"] / 1e3, cfg["step_budget_us"] / 1e6)
    rep = evaluation.benchmark(model, ds, slices, repeats=int(cfg["repeats"]), budget=budget)
    out = _outdir(cfg)
    (out / "benchmark.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n", encoding="utf-8")
    _echo(cfg, f"training on {rep.n_train} points: {rep.train_time * 1e3:.3f} ms (median of {rep.repeats})")
    _echo(cfg, f"inference: {rep.step_time * 1e6:.2f} us per step ({rep.n_steps} steps)")
    _write_manifest(out, "benchmark", cfg, [], inputs=[cfg["model"], cfg["run"]], timing=rep.to_dict())
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "gridsearch": cmd_gridsearch,
    "benchmark": cmd_benchmark,
}


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file or a manifest JSON to replay")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="seed for noise, eccentric profiles and random slicing")
    common.add_argument("--quiet", action="store_true", default=None)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--run", help="run file (sectioned or wide CSV)")
    data.add_argument("--inputs", type=_csv_list(str), help="comma-separated input channels")
    data.add_argument("--target", help="target channel (default: thrust)")
    data.add_argument("--rate", type=float, help="common rate in S/s (default: slowest channel)")
    data.add_argument("--calibration", help="calibration JSON to convert a voltage channel to thrust")
    data.add_argument("--voltage-channel", dest="voltage_channel")

    slicing = argparse.ArgumentParser(add_help=False)
    slicing.add_argument("--n-slices", dest="n_slices", type=int)
    slicing.add_argument("--pattern", choices=["alternating", "random"])
    slicing.add_argument("--first", choices=["train", "test"], help="label of the first alternating slice")
    slicing.add_argument("--whole", action="store_true", default=None, help="treat the whole run as one test slice")

    p = argparse.ArgumentParser(prog="ngrc-twin", description="NG-RC digital twin of a turbine engine")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate a surrogate engine run")
    s.add_argument("--profile", choices=["default", *engine_sim.PROFILE_KINDS])
    s.add_argument("--duration", type=float)
    s.add_argument("--dt", type=float)
    s.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    s.add_argument("--egt-b0", dest="egt_b0", type=float, help="EGT offset (ambient-dependent term)")
    s.add_argument("--steps", type=int, help="plateau count for library profiles")
    s.add_argument("--run-id", dest="run_id")

    c = sub.add_parser("calibrate", parents=[common], help="fit a load-cell calibration line")
    c.add_argument("points", nargs="?", help="CSV of volts,newtons")

    t = sub.add_parser("train", parents=[common, data, slicing], help="train and evaluate one model")
    t.add_argument("--test-run", dest="test_run", help="train on all of --run, test on all of this run")
    t.add_argument("-k", "--lookback", dest="k", type=int)
    t.add_argument("-s", "--skip", dest="s", type=int)
    t.add_argument("--alpha", type=float)

    pr = sub.add_parser("predict", parents=[common, data], help="open-loop thrust prediction for a run")
    pr.add_argument("--model")

    e = sub.add_parser("evaluate", parents=[common, data, slicing], help="score a saved model on test slices")
    e.add_argument("--model")

    g = sub.add_parser("gridsearch", parents=[common, data, slicing], help="search k, s and alpha")
    g.add_argument("--k-values", dest="k_values", type=_csv_list(int))
    g.add_argument("--s-values", dest="s_values", type=_csv_list(int))
    g.add_argument("--alpha-values", dest="alpha_values", type=_csv_list(float))
    g.add_argument("--workers", type=int)

    b = sub.add_parser("benchmark", parents=[common, data, slicing], help="time training and inference")
    b.add_argument("--model")
    b.add_argument("--repeats", type=int)
    b.add_argument("--train-budget-ms", dest="train_budget_ms", type=float)
    b.add_argument("--step-budget-us", dest="step_budget_us", type=float)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except TwinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
