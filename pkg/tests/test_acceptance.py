"""Exit criteria for the package, each checked at its fixed tolerance.

Every test appends one PASS/FAIL line that is printed in the pytest
terminal summary under "acceptance criteria".
"""

import time

import numpy as np
import pytest

from ngrc_twin.calibration import CalibrationPoint, fit_calibration, synthetic_session
from ngrc_twin.dataset import (
    Channel,
    RunDataset,
    Slice,
    SliceSpec,
    align,
    apply_normalization,
    fit_normalization,
    invert_normalization,
    make_slices,
    merge_runs,
)
from ngrc_twin.engine_sim import EngineParams, default_profile, profile_library, sensor_channels, simulate
from ngrc_twin.evaluation import GridSpec, TimingBudget, benchmark, evaluate, grid_search
from ngrc_twin.ngrc import Metaparameters, build_features, fit_model, train

from conftest import SIM_INPUTS, run_dataset
from oracles import ridge_closed_form

ALPHAS = tuple(10.0**e for e in range(-8, 0))


def check(log, label, ok, detail):
    log.append(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, detail


def test_c1_surrogate_twin_accuracy(acceptance_log):
    t0 = time.perf_counter()
    run = simulate(default_profile(), EngineParams(noise_sigma=0.005))
    ds = run_dataset(run, "default")
    slices = make_slices(ds.length, 9, first="test")
    best, _ = grid_search(ds, slices, GridSpec((1,), (1,), ALPHAS), SIM_INPUTS, "thrust")
    model = fit_model(ds, slices, SIM_INPUTS, "thrust", best)
    rep = evaluate(model, ds, slices)
    elapsed = time.perf_counter() - t0
    assert len(run) == 1734 and (len(slices.train), len(slices.test)) == (4, 5)
    check(
        acceptance_log,
        "C1 surrogate twin accuracy",
        rep.nrmse <= 0.03 and elapsed < 5.0,
        f"pooled test NRMSE {100 * rep.nrmse:.3f}% (limit 3%, target 2%) alpha={best.alpha:g} "
        f"n_train={rep.n_train} runtime {elapsed:.2f} s (limit 5 s)",
    )


def test_c2_feature_dimensions(acceptance_log):
    fm = build_features(np.random.default_rng(0).random((4, 50)), Metaparameters(1, 1))
    ok = (fm.d_linear, fm.d_quadratic, fm.d) == (8, 36, 45)
    check(acceptance_log, "C2 feature dimensions", ok,
          f"d_linear={fm.d_linear} quadratic={fm.d_quadratic} total d={fm.d} (expected 8/36/45)")


def test_c3_ridge_oracle_equivalence(acceptance_log):
    rng = np.random.default_rng(2024)
    O = rng.normal(size=(5, 200))
    Y = rng.normal(size=200)
    w = train(O, Y, 0.1)
    oracle = np.array(ridge_closed_form(O.tolist(), Y.tolist(), 0.1))
    rel = np.max(np.abs(w - oracle)) / np.max(np.abs(oracle))

    O2 = np.vstack([np.ones(200), rng.normal(size=(4, 200))])
    w_true = np.array([0.75, -2.0, 1.25, 0.5, -0.125])
    w2 = train(O2, w_true @ O2, 1e-12)
    rel2 = np.max(np.abs(w2 - w_true) / np.abs(w_true))
    check(acceptance_log, "C3 ridge oracle equivalence", rel <= 1e-9 and rel2 <= 1e-6,
          f"solver vs explicit inverse rel err {rel:.2e} (limit 1e-9); recovery rel err {rel2:.2e} (limit 1e-6)")


def test_c4_cross_run_generalization(acceptance_log):
    base = EngineParams()
    b_far, b_n2, b0 = base.egt_coeffs
    run_a = simulate(profile_library("eccentric", seed=11), EngineParams(noise_sigma=0.005, seed=11))
    run_b = simulate(profile_library("ascending", seed=12),
                     EngineParams(noise_sigma=0.005, seed=12, egt_coeffs=(b_far, b_n2, 1.02 * b0)))
    ds_a, ds_b = run_dataset(run_a, "A"), run_dataset(run_b, "B")
    model = fit_model(ds_a, None, SIM_INPUTS, "thrust", Metaparameters(1, 1, 1e-5))
    rep = evaluate(model, ds_b, SliceSpec((Slice(0, ds_b.length, "test"),)))
    check(acceptance_log, "C4 cross-run generalization", rep.nrmse <= 0.05,
          f"train eccentric seed 11 -> test ascending seed 12 (EGT offset +2%): NRMSE {100 * rep.nrmse:.3f}% (limit 5%)")


def _sparse_train_slices(length, n_slices, width):
    starts = np.linspace(0, length - width, n_slices).round().astype(int)
    out, prev = [], 0
    for st in starts:
        if st > prev:
            out.append(Slice(prev, int(st), "test"))
        out.append(Slice(int(st), int(st) + width, "train"))
        prev = int(st) + width
    if prev < length:
        out.append(Slice(prev, length, "test"))
    return SliceSpec(tuple(out), length)


def test_c5_small_training_set(acceptance_log):
    # 1 kHz surrogate -> multirate sensor streams -> 10 S/s common rate
    run = simulate(default_profile(), EngineParams(dt=0.001, noise_sigma=0.005, seed=3))
    ds = align(sensor_channels(run), 10.0, "p100-analogue")
    slices = _sparse_train_slices(ds.length, 5, 29)
    best, _ = grid_search(ds, slices, GridSpec((1,), (1,), ALPHAS), SIM_INPUTS, "thrust")
    model = fit_model(ds, slices, SIM_INPUTS, "thrust", best)
    rep = evaluate(model, ds, slices)
    plateaus = np.unique(ds["requested_speed"][slices.indices("train")])
    ok = model.n_train == 140 and len(plateaus) >= 2 and rep.nrmse <= 0.05
    check(acceptance_log, "C5 small training set", ok,
          f"n_train={model.n_train} over {len(plateaus)} plateaus, held-out NRMSE {100 * rep.nrmse:.3f}% (limit 5%)")


def test_c6_timing_budgets(acceptance_log):
    run = simulate(default_profile(), EngineParams(noise_sigma=0.005))
    ds = run_dataset(run, "default")
    slices = make_slices(ds.length, 9, first="test")
    model = fit_model(ds, slices, SIM_INPUTS, "thrust", Metaparameters(1, 1, 1e-5))
    rep = benchmark(model, ds, slices, repeats=31, budget=TimingBudget(0.1, 100e-6))
    ok = rep.n_train <= 900 and rep.train_ok and rep.step_ok
    check(acceptance_log, "C6 timing budgets", ok,
          f"training {rep.n_train} points: {1e3 * rep.train_time:.3f} ms (limit 100 ms); "
          f"inference {1e6 * rep.step_time:.2f} us/step (limit 100 us)")


def test_c7_calibration(acceptance_log):
    slope, intercept, sigma = 50.0, 2.0, 0.1
    hits = 0
    for seed in range(100):
        pts = synthetic_session(slope, intercept, sigma, np.random.default_rng(seed))
        fit = fit_calibration(pts)
        hits += abs(fit.slope - slope) <= 3 * fit.slope_stderr(sigma)
    two = fit_calibration([CalibrationPoint(7.0, 0.25), CalibrationPoint(37.0, 1.75)])
    exact = abs(two.slope - 20.0) <= 1e-12 * 20.0 and abs(two.intercept - 2.0) <= 1e-12 * 2.0
    check(acceptance_log, "C7 calibration", hits >= 99 and exact,
          f"slope within 3 SE in {hits}/100 trials (need 99); two-point exact: {exact}")


def test_c8_data_pipeline_invariants(acceptance_log):
    rng = np.random.default_rng(8)
    x = rng.normal(25.0, 4.0, 100_000)
    ds = align([Channel("thrust", "N", 1000.0, x)], 10.0)
    mean_err = abs(ds["thrust"].mean() - x.mean()) / abs(x.mean())

    raw = RunDataset("n", 10.0, {"a": rng.normal(size=500) * 1e3, "b": rng.random(500)})
    spec = fit_normalization(raw, ["a", "b"])
    back = invert_normalization(apply_normalization(raw, spec), spec)
    rt_err = max(np.max(np.abs(back[c] - raw[c]) / np.max(np.abs(raw[c]))) for c in ("a", "b"))

    bad_cases = 0
    for seed in range(1000):
        r = np.random.default_rng(seed)
        length = int(r.integers(2, 400))
        n = int(r.integers(2, length + 1))
        pattern = "random" if r.random() < 0.5 else "alternating"
        sl = make_slices(length, n, pattern, seed=seed)
        cover = np.zeros(length, dtype=int)
        for s in sl:
            cover[s.start : s.end] += 1
        n_parts = int(r.integers(1, 6))
        base = RunDataset("r", 10.0, {"v": np.arange(length, dtype=float)})
        parts = []
        for _ in range(n_parts):
            a = int(r.integers(0, length - 1))
            b = int(r.integers(a + 1, length + 1))
            parts.append((base, (a, b)))
        merged = merge_runs(parts)
        ok = bool(np.all(cover == 1))
        if pattern == "random":
            ok = ok and len(sl.train) == (n + 1) // 2
        ok = ok and merged.length == sum(b - a for _, (a, b) in parts)
        ok = ok and len(merged.junctions) == n_parts - 1
        bad_cases += not ok
    ok = mean_err <= 1e-9 and rt_err <= 1e-12 and bad_cases == 0
    check(acceptance_log, "C8 data-pipeline invariants", ok,
          f"block-mean rel err {mean_err:.1e} (limit 1e-9); round-trip rel err {rt_err:.1e} (limit 1e-12); "
          f"{1000 - bad_cases}/1000 slice/merge cases consistent")
