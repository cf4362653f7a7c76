"""Scoring, metaparameter grid search and timing benchmarks."""

from __future__ import annotations

import csv
import io
import itertools
import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dataset import TEST, TRAIN, RunDataset, SliceSpec
from .errors import DegenerateRangeError, SliceTooShortError, TwinError, UsageError
from .ngrc import Metaparameters, StepPredictor, TrainedModel, feature_dims, fit_model, predict_run


def nrmse(predicted, truth) -> float:
    """Root-mean-square error divided by the range of ``truth``."""
    p = np.asarray(predicted, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape:
        raise UsageError(f"length mismatch: {p.shape} vs {t.shape}")
    if t.size < 2:
        raise UsageError("nrmse needs at least 2 samples")
    span = float(t.max() - t.min())
    if not span > 0:
        raise DegenerateRangeError("truth is constant; nrmse is undefined")
    return float(np.sqrt(np.mean((p - t) ** 2)) / span)


@dataclass
class EvalReport:
    nrmse: float
    per_slice: list[dict]
    metaparams: dict
    n_train: int
    n_test: int
    train_time: float | None
    inference_time_per_step: float
    train_nrmse: float | None = None
    run_id: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _scored(model: TrainedModel, ds: RunDataset, slices, label: str):
    """Predictions and truth over every slice with ``label``, warmup excluded."""
    w = model.metaparams.warmup
    out = []
    for i, sl in enumerate(slices):
        if sl.label != label:
            continue
        if len(sl) < w + 2:
            raise SliceTooShortError(
                f"{label} slice #{i} [{sl.start}, {sl.end}) has {len(sl)} samples; k*s + 2 = {w + 2} required"
            )
        pred = predict_run(model, ds, sl.start, sl.end)
        truth = ds[model.target_channel][sl.start : sl.end]
        ok = ~np.isnan(pred)
        out.append((i, sl, pred[ok], truth[ok]))
    return out


def evaluate(model: TrainedModel, ds: RunDataset, slices: SliceSpec) -> EvalReport:
    """Score ``model`` on the test slices of ``ds`` in physical units.

    The first ``k*s`` samples of each slice (and of each merged segment
    inside it) are delay history only. Per-slice errors are normalized by
    the pooled truth range so that flat slices stay well defined.
    """
    if model.target_channel not in ds.channels:
        raise UsageError(f"run {ds.run_id!r} has no target channel {model.target_channel!r}")
    parts = _scored(model, ds, slices, TEST)
    if not parts:
        raise UsageError("slice spec has no test slices")
    t0 = time.perf_counter()
    for _, sl, _, _ in parts:
        predict_run(model, ds, sl.start, sl.end)
    elapsed = time.perf_counter() - t0
    pred = np.concatenate([p for _, _, p, _ in parts])
    truth = np.concatenate([t for _, _, _, t in parts])
    pooled = nrmse(pred, truth)
    span = float(truth.max() - truth.min())
    per_slice = [
        {
            "index": i,
            "start": sl.start,
            "end": sl.end,
            "n": int(p.size),
            "nrmse": float(np.sqrt(np.mean((p - t) ** 2)) / span) if p.size else None,
        }
        for i, sl, p, t in parts
    ]
    train_score = None
    if slices.train:
        try:
            tr = _scored(model, ds, slices, TRAIN)
            tp = np.concatenate([p for *_, p, _ in tr])
            tt = np.concatenate([t for *_, t in tr])
            train_score = nrmse(tp, tt)
        except TwinError:
            train_score = None
    return EvalReport(
        nrmse=pooled,
        per_slice=per_slice,
        metaparams=model.metaparams.to_dict(),
        n_train=model.n_train,
        n_test=int(truth.size),
        train_time=model.train_time,
        inference_time_per_step=elapsed / truth.size,
        train_nrmse=train_score,
        run_id=ds.run_id,
    )


def prediction_rows(model: TrainedModel, ds: RunDataset, slices: SliceSpec | None = None) -> list[tuple]:
    """``(time, truth, prediction, label)`` rows for plotting; truth is NaN if absent."""
    pred = predict_run(model, ds)
    truth = ds[model.target_channel] if model.target_channel in ds.channels else np.full(ds.length, np.nan)
    labels = np.full(ds.length, "", dtype=object)
    if slices is not None:
        for sl in slices:
            labels[sl.start : sl.end] = sl.label
    return list(zip(ds.time.tolist(), truth.tolist(), pred.tolist(), labels.tolist()))


def write_prediction_csv(rows, path, with_truth: bool = True, with_label: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "predicted_thrust"] + (["true_thrust"] if with_truth else []) + (["label"] if with_label else []))
        for t, y, p, lab in rows:
            row = [repr(t), "" if np.isnan(p) else repr(p)]
            if with_truth:
                row.append("" if np.isnan(y) else repr(y))
            if with_label:
                row.append(lab)
            w.writerow(row)


# ---------------------------------------------------------------------------
# grid search


@dataclass(frozen=True)
class GridSpec:
    k_values: tuple[int, ...] = (1, 2, 3)
    s_values: tuple[int, ...] = (1, 2, 3)
    alpha_values: tuple[float, ...] = tuple(10.0**e for e in range(-8, 0))

    def __post_init__(self):
        for name in ("k_values", "s_values", "alpha_values"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise UsageError(f"grid {name} must be nonempty")
            object.__setattr__(self, name, vals)
        if any(not a > 0 for a in self.alpha_values):
            raise UsageError("all grid alpha values must be > 0")

    def __iter__(self):
        for k, s, a in itertools.product(self.k_values, self.s_values, self.alpha_values):
            yield Metaparameters(k, s, a)

    def __len__(self):
        return len(self.k_values) * len(self.s_values) * len(self.alpha_values)

    def to_dict(self) -> dict:
        return {"k_values": list(self.k_values), "s_values": list(self.s_values), "alpha_values": list(self.alpha_values)}


@dataclass
class GridResult:
    index: int
    k: int
    s: int
    alpha: float
    d: int
    nrmse: float | None
    status: str
    error: str = ""
    train_nrmse: float | None = None

    @property
    def metaparams(self) -> Metaparameters:
        return Metaparameters(self.k, self.s, self.alpha)


def _run_one(index, meta, ds, slices, inputs, target) -> GridResult:
    d = feature_dims(len(inputs), meta.k)[2]
    try:
        model = fit_model(ds, slices, inputs, target, meta)
        rep = evaluate(model, ds, slices)
        return GridResult(index, meta.k, meta.s, meta.alpha, d, rep.nrmse, "ok", "", rep.train_nrmse)
    except TwinError as exc:
        return GridResult(index, meta.k, meta.s, meta.alpha, d, None, "failed", f"{type(exc).__name__}: {exc}")


def grid_search(ds: RunDataset, slices: SliceSpec, grid: GridSpec, input_channels: Sequence[str],
                target_channel: str, workers: int = 1) -> tuple[Metaparameters | None, list[GridResult]]:
    """Train and score every ``(k, s, alpha)`` of ``grid``.

    Returns the combination with the lowest pooled test NRMSE (ties go to
    fewer features, then smaller alpha) and the full table ordered by
    combination index. Failing combinations are kept in the table with
    status ``failed``; the winner is ``None`` only if every one failed.
    """
    combos = list(grid)
    if not combos:
        raise UsageError("grid is empty")
    inputs = list(input_channels)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, i, m, ds, slices, inputs, target_channel) for i, m in enumerate(combos)]
            table = [f.result() for f in futures]
    else:
        table = [_run_one(i, m, ds, slices, inputs, target_channel) for i, m in enumerate(combos)]
    ok = [r for r in table if r.status == "ok"]
    if not ok:
        return None, table
    best = min(ok, key=lambda r: (r.nrmse, r.d, r.alpha, r.index))
    return best.metaparams, table


def grid_table_csv(table: Sequence[GridResult]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["index", "k", "s", "alpha", "d", "nrmse", "train_nrmse", "status", "error"])
    for r in table:
        w.writerow([r.index, r.k, r.s, repr(r.alpha), r.d, "" if r.nrmse is None else repr(r.nrmse),
                    "" if r.train_nrmse is None else repr(r.train_nrmse), r.status, r.error])
    return out.getvalue()


def grid_table_json(table: Sequence[GridResult]) -> str:
    return json.dumps([asdict(r) for r in table], indent=2)


# ---------------------------------------------------------------------------
# timing


@dataclass(frozen=True)
class TimingBudget:
    train_seconds: float = 0.1
    step_seconds: float = 100e-6


@dataclass
class BenchmarkReport:
    n_train: int
    train_time: float  # median seconds
    step_time: float  # median seconds per prediction
    n_steps: int
    repeats: int
    budget: TimingBudget = field(default_factory=TimingBudget)
    predictions: np.ndarray | None = field(default=None, repr=False)

    @property
    def train_ok(self) -> bool:
        return self.train_time < self.budget.train_seconds

    @property
    def step_ok(self) -> bool:
        return self.step_time < self.budget.step_seconds

    def to_dict(self) -> dict:
        return {
            "n_train": self.n_train,
            "train_time_ms": self.train_time * 1e3,
            "step_time_us": self.step_time * 1e6,
            "n_steps": self.n_steps,
            "repeats": self.repeats,
            "budget": {"train_ms": self.budget.train_seconds * 1e3, "step_us": self.budget.step_seconds * 1e6},
            "train_within_budget": self.train_ok,
            "step_within_budget": self.step_ok,
        }


def benchmark(model: TrainedModel, ds: RunDataset, slices: SliceSpec | None = None, repeats: int = 31,
              budget: TimingBudget | None = None, max_steps: int = 2000) -> BenchmarkReport:
    """Median-of-``repeats`` training time and per-step streaming inference time.

    Training is re-run with the model's metaparameters on the training
    slices of ``ds`` (all of ``ds`` when ``slices`` is None). Inference feeds
    samples one at a time through :class:`StepPredictor`.
    """
    budget = budget or TimingBudget()
    train_times = []
    n_train = 0
    for _ in range(repeats):
        m = fit_model(ds, slices, model.input_channels, model.target_channel, model.metaparams)
        train_times.append(m.train_time)
        n_train = m.n_train
    x = ds.matrix(model.input_channels).T[:max_steps]
    sp = StepPredictor(model)
    step_times = []
    preds = None
    for _ in range(repeats):
        sp.reset()
        out = np.full(len(x), np.nan)
        t0 = time.perf_counter()
        for i, row in enumerate(x):
            y = sp.step(row)
            if y is not None:
                out[i] = y
        step_times.append((time.perf_counter() - t0) / len(x))
        preds = out
    return BenchmarkReport(n_train, statistics.median(train_times), statistics.median(step_times), len(x), repeats,
                           budget, preds)
