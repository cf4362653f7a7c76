"""Next-generation reservoir computer with a ridge-regression readout.

Each feature vector stacks a constant, the inputs at the current step and
``k`` delayed taps spaced ``s`` samples apart, and every unique quadratic
monomial of those linear terms. The readout is linear in the features and
trained in closed form; prediction is open loop (the target is never fed
back as an input).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg

from .dataset import TRAIN, NormalizationSpec, RunDataset, SliceSpec, fit_normalization
from .errors import (
    ContractError,
    DataFormatError,
    InsufficientHistoryError,
    NumericError,
    UsageError,
    VersionError,
)

SCHEMA = "ngrc-twin.model"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Metaparameters:
    k: int = 1
    s: int = 1
    alpha: float = 1e-5

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise UsageError(f"lookback k must be a non-negative integer, got {self.k}")
        if int(self.s) != self.s or self.s < 1:
            raise UsageError(f"skip s must be a positive integer, got {self.s}")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise UsageError(f"alpha must be > 0, got {self.alpha}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "s", int(self.s))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def warmup(self) -> int:
        """Samples of history consumed before the first feature vector."""
        return self.k * self.s

    def to_dict(self) -> dict:
        return {"k": self.k, "s": self.s, "alpha": self.alpha}


def feature_dims(m: int, k: int) -> tuple[int, int, int]:
    """``(d_linear, d_quadratic, d)`` for ``m`` channels and lookback ``k``."""
    d_lin = m * (k + 1)
    d_quad = d_lin * (d_lin + 1) // 2
    return d_lin, d_quad, 1 + d_lin + d_quad


@dataclass(frozen=True)
class FeatureMatrix:
    features: np.ndarray  # d x N_valid
    d_linear: int
    first_valid_index: int

    @property
    def d(self) -> int:
        return self.features.shape[0]

    @property
    def d_quadratic(self) -> int:
        return self.d - 1 - self.d_linear

    @property
    def n_valid(self) -> int:
        return self.features.shape[1]

    @property
    def linear(self) -> np.ndarray:
        return self.features[1 : 1 + self.d_linear]

    @property
    def quadratic(self) -> np.ndarray:
        return self.features[1 + self.d_linear :]


def build_features(inputs, meta: Metaparameters) -> FeatureMatrix:
    """Feature vectors for every step ``n >= k*s`` of an ``m x T`` input array.

    Linear rows are ordered tap-major: all channels at ``n``, then all at
    ``n - s``, and so on. Quadratic rows are ``lin[i] * lin[j]`` for ``i <= j``
    in row-major upper-triangular order.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    m, T = x.shape
    w = meta.warmup
    if T <= w:
        raise InsufficientHistoryError(f"need more than k*s = {w} steps of history, got {T}")
    if not np.all(np.isfinite(x)):
        raise NumericError("inputs contain non-finite values")
    lin = np.vstack([x[:, w - j * meta.s : T - j * meta.s] for j in range(meta.k + 1)])
    iu, ju = np.triu_indices(lin.shape[0])
    feats = np.vstack([np.ones((1, T - w)), lin, lin[iu] * lin[ju]])
    return FeatureMatrix(feats, lin.shape[0], w)


def ridge_solve(features, targets, alpha: float) -> np.ndarray:
    """Readout weights ``Y O^T (O O^T + alpha I)^-1`` via a positive-definite solve."""
    O = features.features if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=float)
    Y = np.asarray(targets, dtype=float).ravel()
    if Y.size != O.shape[1]:
        raise UsageError(f"targets length {Y.size} != number of feature columns {O.shape[1]}")
    if not alpha > 0:
        raise UsageError(f"alpha must be > 0, got {alpha}")
    if not (np.all(np.isfinite(O)) and np.all(np.isfinite(Y))):
        raise NumericError("non-finite values in features or targets")
    gram = O @ O.T
    gram[np.diag_indices_from(gram)] += alpha
    try:
        w = linalg.solve(gram, O @ Y, assume_a="pos")
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"ridge solve failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NumericError("ridge solve produced non-finite weights")
    return w


train = ridge_solve


@dataclass(frozen=True)
class TrainedModel:
    w_out: np.ndarray
    metaparams: Metaparameters
    input_channels: tuple[str, ...]
    target_channel: str
    normalization: NormalizationSpec
    n_train: int = 0
    train_time: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.w_out, dtype=float).ravel()
        w.setflags(write=False)
        object.__setattr__(self, "w_out", w)
        object.__setattr__(self, "input_channels", tuple(self.input_channels))
        if w.size != self.d:
            raise ContractError(
                f"w_out has {w.size} weights but {len(self.input_channels)} channels with k={self.metaparams.k} imply d={self.d}"
            )
        for name in (*self.input_channels, self.target_channel):
            if name not in self.normalization:
                raise ContractError(f"normalization spec has no range for channel {name!r}")

    @property
    def d(self) -> int:
        return feature_dims(len(self.input_channels), self.metaparams.k)[2]

    @property
    def training_stats(self) -> tuple[int, float | None]:
        return self.n_train, self.train_time


def _input_matrix(model: TrainedModel, inputs) -> np.ndarray:
    if isinstance(inputs, (RunDataset, Mapping)):
        chans = inputs.channels if isinstance(inputs, RunDataset) else inputs
        missing = [c for c in model.input_channels if c not in chans]
        if missing:
            raise ContractError(f"inputs lack model channels {missing}; model expects {list(model.input_channels)}")
        return np.vstack([np.asarray(chans[c], dtype=float) for c in model.input_channels])
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    if x.shape[0] != len(model.input_channels):
        raise ContractError(f"inputs have {x.shape[0]} channels, model expects {len(model.input_channels)}")
    return x


def predict(model: TrainedModel, inputs) -> tuple[np.ndarray, int]:
    """Apply the readout to normalized ``inputs``.

    ``inputs`` is an ``m x T`` array in ``model.input_channels`` order, or a
    mapping from channel name to normalized samples. Returns normalized
    predictions for steps ``first_valid_index .. T-1``.
    """
    x = _input_matrix(model, inputs)
    if x.shape[1] < model.metaparams.warmup + 1:
        raise InsufficientHistoryError(f"need at least {model.metaparams.warmup + 1} steps, got {x.shape[1]}")
    fm = build_features(x, model.metaparams)
    return model.w_out @ fm.features, fm.first_valid_index


def _segment_features(ds: RunDataset, ranges, inputs, target, meta):
    blocks, ys = [], []
    for a, b in ranges:
        for lo, hi in ds.segments(a, b):
            if hi - lo <= meta.warmup:
                continue
            fm = build_features(ds.matrix(inputs)[:, lo:hi], meta)
            blocks.append(fm.features)
            ys.append(ds[target][lo + fm.first_valid_index : hi])
    if not blocks:
        raise InsufficientHistoryError(f"no training segment is longer than k*s = {meta.warmup}")
    return np.hstack(blocks), np.concatenate(ys)


def fit_model(ds: RunDataset, slices: SliceSpec | None, input_channels: Sequence[str], target_channel: str,
              meta: Metaparameters) -> TrainedModel:
    """Normalize on the training slices, build features per segment and solve for the readout."""
    if slices is None:
        ranges = [(0, ds.length)]
        rows = None
    else:
        ranges = [(s.start, s.end) for s in slices.labelled(TRAIN)]
        if not ranges:
            raise UsageError("slice spec has no training slices")
        rows = slices
    names = list(dict.fromkeys([*input_channels, target_channel]))
    spec = fit_normalization(ds, names, rows)
    norm = ds.with_channels({n: spec.forward(n, ds[n]) for n in names})
    t0 = time.perf_counter()
    O, Y = _segment_features(norm, ranges, list(input_channels), target_channel, meta)
    w = ridge_solve(O, Y, meta.alpha)
    elapsed = time.perf_counter() - t0
    return TrainedModel(w, meta, tuple(input_channels), target_channel, spec, int(Y.size), elapsed)


def predict_run(model: TrainedModel, ds: RunDataset, start: int = 0, end: int | None = None) -> np.ndarray:
    """Physical-unit predictions over ``ds[start:end]``.

    Every contiguous segment spends its first ``k*s`` samples as delay history;
    those positions (and segments too short to predict) are NaN.
    """
    end = ds.length if end is None else end
    missing = [c for c in model.input_channels if c not in ds.channels]
    if missing:
        raise ContractError(f"run {ds.run_id!r} lacks model channels {missing}")
    spec = model.normalization
    x = np.vstack([spec.forward(c, ds[c]) for c in model.input_channels])
    out = np.full(end - start, np.nan)
    for lo, hi in ds.segments(start, end):
        if hi - lo <= model.metaparams.warmup:
            continue
        y, first = predict(model, x[:, lo:hi])
        out[lo - start + first : hi - start] = spec.inverse(model.target_channel, y)
    return out


class StepPredictor:
    """Streaming form of the readout: one physical sample in, one thrust estimate out.

    Keeps the last ``k*s + 1`` normalized input vectors in a ring buffer.
    Returns ``None`` until the delay taps are filled.
    """

    def __init__(self, model: TrainedModel):
        self.model = model
        meta = model.metaparams
        m = len(model.input_channels)
        self._depth = meta.warmup + 1
        self._buf = np.zeros((self._depth, m))
        self._count = 0
        lo = np.array([model.normalization.ranges[c][0] for c in model.input_channels])
        hi = np.array([model.normalization.ranges[c][1] for c in model.input_channels])
        self._lo, self._scale = lo, 1.0 / (hi - lo)
        self._taps = np.arange(meta.k + 1) * meta.s
        d_lin = m * (meta.k + 1)
        self._iu, self._ju = np.triu_indices(d_lin)
        self._o = np.ones(model.d)
        self._d_lin = d_lin
        t_lo, t_hi = model.normalization.ranges[model.target_channel]
        self._t_lo, self._t_span = t_lo, t_hi - t_lo

    def reset(self) -> None:
        self._count = 0

    def step(self, x) -> float | None:
        pos = self._count % self._depth
        self._buf[pos] = (np.asarray(x, dtype=float) - self._lo) * self._scale
        self._count += 1
        if self._count < self._depth:
            return None
        lin = self._buf[(pos - self._taps) % self._depth].ravel()
        o = self._o
        o[1 : 1 + self._d_lin] = lin
        o[1 + self._d_lin :] = lin[self._iu] * lin[self._ju]
        return float(self.model.w_out @ o) * self._t_span + self._t_lo


# ---------------------------------------------------------------------------
# serialization


def to_dict(model: TrainedModel, include_timing: bool = True) -> dict:
    return {
        "schema": SCHEMA,
        "version": SCHEMA_VERSION,
        "metaparams": model.metaparams.to_dict(),
        "input_channels": list(model.input_channels),
        "target_channel": model.target_channel,
        "normalization": model.normalization.to_dict(),
        "d": model.d,
        "w_out": [float(w) for w in model.w_out],
        "training_stats": {
            "n_train": model.n_train,
            "train_time": model.train_time if include_timing else None,
        },
        "extra": model.extra,
    }


def from_dict(doc: dict) -> TrainedModel:
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise DataFormatError(f"not a model document (schema {doc.get('schema') if isinstance(doc, dict) else None!r})")
    version = doc.get("version")
    if not isinstance(version, int):
        raise DataFormatError("model document has no integer version")
    if version > SCHEMA_VERSION:
        raise VersionError(f"model schema version {version} is newer than supported version {SCHEMA_VERSION}")
    if version < 1:
        raise VersionError(f"unknown model schema version {version}")
    try:
        meta = Metaparameters(**doc["metaparams"])
        w = np.array(doc["w_out"], dtype=float)
        if int(doc["d"]) != w.size:
            raise DataFormatError(f"declared d = {doc['d']} but w_out has {w.size} entries")
        stats = doc.get("training_stats", {})
        return TrainedModel(
            w,
            meta,
            tuple(doc["input_channels"]),
            doc["target_channel"],
            NormalizationSpec.from_dict(doc["normalization"]),
            int(stats.get("n_train", 0)),
            stats.get("train_time"),
            dict(doc.get("extra", {})),
        )
    except KeyError as exc:
        raise DataFormatError(f"model document missing field {exc}") from None
    except ContractError as exc:
        raise DataFormatError(str(exc)) from None


def serialize(model: TrainedModel, include_timing: bool = True) -> bytes:
    return (json.dumps(to_dict(model, include_timing), indent=2) + "\n").encode("utf-8")


def deserialize(data: bytes | str) -> TrainedModel:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"model file is not valid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    return from_dict(doc)


def save_model(model: TrainedModel, path, include_timing: bool = True) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(model, include_timing))


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
