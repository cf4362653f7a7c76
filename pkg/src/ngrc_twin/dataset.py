"""Run ingestion, multirate alignment, normalization, slicing and merging.

Two on-disk layouts are understood by :func:`load_run`.

Sectioned (one block per channel, each at its own rate)::

    # run_id: p100-0412-a
    # ambient_temperature_c: 12.5
    ## channel,thrust,N,1000
    41.7
    41.9
    ...
    ## channel,rpm,r/min,10
    35000
    ...

Wide (pre-aligned, one row per sample, first column ``time`` in seconds)::

    # run_id: sim-default
    time,requested_speed,actual_speed,thrust[N],egt[degC],far
    0.000,0.95,0.95,17965.0,782.4,0.0271
    ...

Lines starting with a single ``#`` are ``key: value`` metadata. A unit may
be attached to a wide-format column name in square brackets.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataFormatError, DegenerateRangeError, MergeError, UpsamplingError, UsageError

RATE_RTOL = 1e-9

TRAIN = "train"
TEST = "test"


@dataclass(frozen=True)
class Channel:
    """One sensor stream at its native sampling rate."""

    name: str
    unit: str
    rate: float
    samples: np.ndarray
    start_time: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if not self.rate > 0:
            raise UsageError(f"channel {self.name}: rate must be > 0, got {self.rate}")
        if not np.all(np.isfinite(samples)):
            bad = int(np.flatnonzero(~np.isfinite(samples))[0])
            raise DataFormatError(f"channel {self.name}: non-finite sample at index {bad}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.rate


@dataclass(frozen=True)
class RawRun:
    """A run as read from disk: channels at native rates, not yet aligned."""

    run_id: str
    channels: tuple[Channel, ...]
    meta: dict = field(default_factory=dict)

    def channel(self, name: str) -> Channel:
        for ch in self.channels:
            if ch.name == name:
                return ch
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [ch.name for ch in self.channels]

    def align(self, target_rate: float | None = None) -> "RunDataset":
        if target_rate is None:
            target_rate = min(ch.rate for ch in self.channels)
        return align(self.channels, target_rate, run_id=self.run_id, meta=self.meta)


@dataclass(frozen=True)
class RunDataset:
    """Aligned, common-rate multichannel table.

    ``junctions`` lists sample indices where a new contiguous segment starts
    (produced by :func:`merge_runs`); delay windows never cross them.
    """

    run_id: str
    rate: float
    channels: Mapping[str, np.ndarray]
    meta: dict = field(default_factory=dict)
    units: Mapping[str, str] = field(default_factory=dict)
    junctions: tuple[int, ...] = ()
    start_time: float = 0.0

    def __post_init__(self):
        chans = {k: np.asarray(v, dtype=float) for k, v in self.channels.items()}
        lengths = {len(v) for v in chans.values()}
        if len(lengths) > 1:
            raise UsageError(f"run {self.run_id}: channel lengths differ {sorted(lengths)}")
        for v in chans.values():
            v.setflags(write=False)
        object.__setattr__(self, "channels", chans)
        object.__setattr__(self, "junctions", tuple(sorted(int(j) for j in self.junctions)))
        n = self.length
        if any(not 0 < j < n for j in self.junctions):
            raise UsageError(f"run {self.run_id}: junction outside (0, {n})")

    @property
    def length(self) -> int:
        return len(next(iter(self.channels.values()))) if self.channels else 0

    def __len__(self):
        return self.length

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise KeyError(f"run {self.run_id!r} has no channel {name!r}; available: {sorted(self.channels)}") from None

    @property
    def names(self) -> list[str]:
        return list(self.channels)

    @property
    def time(self) -> np.ndarray:
        return self.start_time + np.arange(self.length) / self.rate

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Stack the named channels into an ``m x T`` array."""
        return np.vstack([self[n] for n in names])

    def segments(self, start: int = 0, end: int | None = None) -> list[tuple[int, int]]:
        """Split ``[start, end)`` at junctions into contiguous half-open pieces."""
        end = self.length if end is None else end
        cuts = [start] + [j for j in self.junctions if start < j < end] + [end]
        return [(a, b) for a, b in zip(cuts, cuts[1:]) if b > a]

    def with_channels(self, channels: Mapping[str, np.ndarray]) -> "RunDataset":
        return replace(self, channels={**self.channels, **channels})


# ---------------------------------------------------------------------------
# loading / writing


def _parse_meta_line(line: str, lineno: int) -> tuple[str, str]:
    body = line[1:].strip()
    if ":" not in body:
        raise DataFormatError(f"metadata line must be '# key: value', got {line!r}", line=lineno)
    key, value = body.split(":", 1)
    return key.strip(), value.strip()


def _coerce(value: str):
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


def _float_cell(text: str, lineno: int, column: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"non-numeric cell {text!r}", line=lineno, column=column) from None
    if not math.isfinite(v):
        raise DataFormatError(f"non-finite cell {text!r}", line=lineno, column=column)
    return v


def _split_unit(header: str) -> tuple[str, str]:
    header = header.strip()
    if header.endswith("]") and "[" in header:
        name, unit = header[:-1].split("[", 1)
        return name.strip(), unit.strip()
    return header, ""


def _read_sectioned(lines: list[str], first: int, meta: dict) -> list[Channel]:
    channels = []
    current = None
    values: list[float] = []

    def flush():
        if current is not None:
            name, unit, rate, lineno = current
            if not values:
                raise DataFormatError(f"channel {name!r} has no samples", line=lineno)
            channels.append(Channel(name, unit, rate, np.array(values)))

    for lineno, raw in enumerate(lines[first:], start=first + 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("##"):
            flush()
            parts = [p.strip() for p in line[2:].split(",")]
            if len(parts) != 4 or parts[0] != "channel":
                raise DataFormatError("channel header must be '## channel,<name>,<unit>,<rate>'", line=lineno)
            rate = _float_cell(parts[3], lineno, 4)
            if rate <= 0:
                raise DataFormatError(f"rate must be > 0, got {parts[3]}", line=lineno, column=4)
            current = (parts[1], parts[2], rate, lineno)
            values = []
        elif line.startswith("#"):
            k, v = _parse_meta_line(line, lineno)
            meta[k] = _coerce(v)
        else:
            if current is None:
                raise DataFormatError("sample before any '## channel' header", line=lineno)
            cells = line.split(",")
            if len(cells) != 1:
                raise DataFormatError("sectioned channel rows hold exactly one value", line=lineno, column=2)
            values.append(_float_cell(cells[0], lineno, 1))
    flush()
    return channels


def _read_wide(lines: list[str], first: int, meta: dict) -> list[Channel]:
    body = [(i + 1, ln) for i, ln in enumerate(lines) if i >= first and ln.strip() and not ln.lstrip().startswith("#")]
    for i, ln in enumerate(lines[first:], start=first + 1):
        if ln.lstrip().startswith("#"):
            k, v = _parse_meta_line(ln.strip(), i)
            meta[k] = _coerce(v)
    if not body:
        raise DataFormatError("no data section found")
    header_lineno, header_line = body[0]
    header = next(csv.reader([header_line]))
    if not header or header[0].strip().lower() != "time":
        raise DataFormatError("wide format header must start with a 'time' column", line=header_lineno, column=1)
    if len(header) < 2:
        raise DataFormatError("wide format needs at least one channel column", line=header_lineno)
    rows = body[1:]
    if not rows:
        raise DataFormatError("empty data section", line=header_lineno)
    data = np.empty((len(rows), len(header)))
    for r, (lineno, ln) in enumerate(rows):
        cells = next(csv.reader([ln]))
        if len(cells) != len(header):
            raise DataFormatError(f"expected {len(header)} cells, got {len(cells)}", line=lineno)
        for c, cell in enumerate(cells):
            data[r, c] = _float_cell(cell, lineno, c + 1)
    t = data[:, 0]
    if len(t) >= 2:
        dt = np.diff(t)
        if np.any(dt <= 0):
            bad = int(np.flatnonzero(dt <= 0)[0])
            raise DataFormatError("time column must be strictly increasing", line=rows[bad + 1][0], column=1)
        step = (t[-1] - t[0]) / (len(t) - 1)
        if np.max(np.abs(dt - step)) > 1e-6 * max(step, 1.0) + 1e-9:
            raise DataFormatError("time column is not uniformly sampled", line=header_lineno, column=1)
        rate = 1.0 / step
    else:
        rate = float(meta.get("rate", 1.0))
    if "rate" in meta:
        rate = float(meta["rate"])
    channels = []
    for c, h in enumerate(header[1:], start=1):
        name, unit = _split_unit(h)
        channels.append(Channel(name, unit, rate, data[:, c], start_time=float(t[0])))
    return channels


def read_run(text: str, source: str = "<string>") -> RawRun:
    lines = text.splitlines()
    meta: dict = {}
    i = 0
    while i < len(lines) and (not lines[i].strip() or (lines[i].startswith("#") and not lines[i].startswith("##"))):
        if lines[i].strip():
            k, v = _parse_meta_line(lines[i].strip(), i + 1)
            meta[k] = _coerce(v)
        i += 1
    if i < len(lines) and lines[i].startswith("##"):
        channels = _read_sectioned(lines, i, meta)
    else:
        channels = _read_wide(lines, i, meta)
    if not channels:
        raise DataFormatError(f"{source}: empty data section")
    names = [c.name for c in channels]
    if len(set(names)) != len(names):
        raise DataFormatError(f"{source}: duplicate channel names {names}")
    run_id = str(meta.get("run_id", os.path.splitext(os.path.basename(source))[0]))
    return RawRun(run_id, tuple(channels), meta)


def load_run(path) -> RawRun:
    """Read a run file in either layout. No resampling is performed."""
    with open(path, encoding="utf-8") as fh:
        return read_run(fh.read(), source=str(path))


def _fmt(v: float) -> str:
    return repr(float(v))


def format_wide(ds: RunDataset, precision: int | None = None, time=None) -> str:
    """Serialize an aligned run in the wide layout.

    With ``precision=None`` values are written with ``repr`` so that a
    reload is bit-exact. ``time`` overrides the generated time column.
    """
    fmt = _fmt if precision is None else (lambda v: f"{v:.{precision}g}")
    out = io.StringIO()
    meta = {"run_id": ds.run_id, **{k: v for k, v in ds.meta.items() if k != "run_id"}}
    for k, v in meta.items():
        out.write(f"# {k}: {v}\n")
    heads = ["time"] + [f"{n}[{ds.units[n]}]" if ds.units.get(n) else n for n in ds.names]
    out.write(",".join(heads) + "\n")
    cols = [ds.time if time is None else np.asarray(time, dtype=float)] + [ds[n] for n in ds.names]
    for row in zip(*cols):
        out.write(",".join(fmt(v) for v in row) + "\n")
    return out.getvalue()


def format_sectioned(run: RawRun) -> str:
    out = io.StringIO()
    meta = {"run_id": run.run_id, **{k: v for k, v in run.meta.items() if k != "run_id"}}
    for k, v in meta.items():
        out.write(f"# {k}: {v}\n")
    for ch in run.channels:
        out.write(f"## channel,{ch.name},{ch.unit},{ch.rate:g}\n")
        out.writelines(_fmt(v) + "\n" for v in ch.samples)
    return out.getvalue()


def save_run(ds: RunDataset | RawRun, path, time=None) -> None:
    text = format_sectioned(ds) if isinstance(ds, RawRun) else format_wide(ds, time=time)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# alignment


def _block_mean(samples: np.ndarray, rate: float, target_rate: float) -> np.ndarray:
    ratio = rate / target_rate
    if abs(ratio - round(ratio)) <= RATE_RTOL * ratio:
        w = int(round(ratio))
        n = len(samples) // w
        return samples[: n * w].reshape(n, w).mean(axis=1)
    # fractional window (e.g. 25 -> 10 S/s): sample i belongs to output
    # bin floor(i * target / rate); only completely covered bins are kept
    n_out = int(math.floor(len(samples) / ratio + 1e-9))
    bins = np.floor(np.arange(len(samples)) / ratio + 1e-9).astype(int)
    keep = bins < n_out
    sums = np.bincount(bins[keep], weights=samples[keep], minlength=n_out)
    counts = np.bincount(bins[keep], minlength=n_out)
    return sums / counts


def align(channels: Iterable[Channel], target_rate: float, run_id: str = "", meta: dict | None = None) -> RunDataset:
    """Bring channels to a common rate by block averaging.

    Channels faster than ``target_rate`` are averaged over consecutive
    windows of ``rate / target_rate`` samples; channels already at the target
    pass through. All outputs are truncated to the shortest length.
    """
    channels = list(channels)
    if not channels:
        raise UsageError("align needs at least one channel")
    if not target_rate > 0:
        raise UsageError(f"target_rate must be > 0, got {target_rate}")
    out = {}
    units = {}
    for ch in channels:
        if ch.rate < target_rate * (1 - RATE_RTOL):
            raise UpsamplingError(
                f"channel {ch.name!r} at {ch.rate:g} S/s is slower than target {target_rate:g} S/s; upsampling is not supported"
            )
        if abs(ch.rate - target_rate) <= RATE_RTOL * target_rate:
            out[ch.name] = ch.samples
        else:
            out[ch.name] = _block_mean(ch.samples, ch.rate, target_rate)
        units[ch.name] = ch.unit
    n = min(len(v) for v in out.values())
    if n == 0:
        raise UsageError("alignment produced an empty dataset")
    start = max(ch.start_time for ch in channels)
    return RunDataset(run_id, float(target_rate), {k: v[:n] for k, v in out.items()}, dict(meta or {}), units, (), start)


# ---------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-channel ``(min, max)`` recorded on training data."""

    ranges: Mapping[str, tuple[float, float]]

    def __post_init__(self):
        for name, (lo, hi) in self.ranges.items():
            if not hi > lo:
                raise DegenerateRangeError(f"channel {name!r}: max ({hi}) must exceed min ({lo})")

    def __contains__(self, name):
        return name in self.ranges

    def forward(self, name: str, x) -> np.ndarray:
        lo, hi = self.ranges[name]
        return (np.asarray(x, dtype=float) - lo) / (hi - lo)

    def inverse(self, name: str, z) -> np.ndarray:
        lo, hi = self.ranges[name]
        return np.asarray(z, dtype=float) * (hi - lo) + lo

    def to_dict(self) -> dict:
        return {k: [float(lo), float(hi)] for k, (lo, hi) in self.ranges.items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "NormalizationSpec":
        return cls({k: (float(v[0]), float(v[1])) for k, v in d.items()})


def _rows(length: int, rows) -> np.ndarray:
    if rows is None:
        return np.arange(length)
    if isinstance(rows, SliceSpec):
        return rows.indices(TRAIN)
    return np.asarray(rows, dtype=int)


def fit_normalization(ds: RunDataset, channels: Sequence[str], rows=None) -> NormalizationSpec:
    """Record min/max of each channel over ``rows``.

    ``rows`` may be an index array or a :class:`SliceSpec`, in which case only
    its training slices are used. ``None`` uses the full run.
    """
    idx = _rows(ds.length, rows)
    if idx.size == 0:
        raise UsageError("no rows to fit normalization on")
    ranges = {}
    for name in channels:
        x = ds[name][idx]
        lo, hi = float(x.min()), float(x.max())
        if not hi > lo:
            raise DegenerateRangeError(f"channel {name!r} is constant ({lo}) over the fit rows")
        ranges[name] = (lo, hi)
    return NormalizationSpec(ranges)


def apply_normalization(ds: RunDataset, spec: NormalizationSpec, channels: Sequence[str] | None = None) -> RunDataset:
    """Map ``x -> (x - min) / (max - min)`` for every channel named in ``spec``.

    Values outside the fitted range are passed through unclamped.
    """
    names = list(spec.ranges) if channels is None else list(channels)
    missing = [n for n in names if n not in ds.channels]
    if missing:
        raise UsageError(f"spec mismatch: run {ds.run_id!r} lacks channels {missing}")
    uncovered = [n for n in names if n not in spec]
    if uncovered:
        raise UsageError(f"spec mismatch: normalization spec has no range for {uncovered}")
    return ds.with_channels({n: spec.forward(n, ds[n]) for n in names})


def invert_normalization(ds: RunDataset, spec: NormalizationSpec, channels: Sequence[str] | None = None) -> RunDataset:
    names = list(spec.ranges) if channels is None else list(channels)
    return ds.with_channels({n: spec.inverse(n, ds[n]) for n in names})


# ---------------------------------------------------------------------------
# slicing


@dataclass(frozen=True)
class Slice:
    start: int
    end: int
    label: str

    def __len__(self):
        return self.end - self.start


@dataclass(frozen=True)
class SliceSpec:
    slices: tuple[Slice, ...]
    length: int | None = None

    def __post_init__(self):
        slices = tuple(s if isinstance(s, Slice) else Slice(*s) for s in self.slices)
        object.__setattr__(self, "slices", slices)
        prev_end = 0
        for s in slices:
            if s.label not in (TRAIN, TEST):
                raise UsageError(f"slice label must be 'train' or 'test', got {s.label!r}")
            if not s.start < s.end:
                raise UsageError(f"empty or reversed slice [{s.start}, {s.end})")
            if s.start < prev_end:
                raise UsageError(f"slices overlap or are unsorted at [{s.start}, {s.end})")
            prev_end = s.end
        if self.length is not None and prev_end > self.length:
            raise UsageError(f"slice end {prev_end} exceeds length {self.length}")

    def __iter__(self):
        return iter(self.slices)

    def __len__(self):
        return len(self.slices)

    def labelled(self, label: str) -> list[Slice]:
        return [s for s in self.slices if s.label == label]

    @property
    def train(self) -> list[Slice]:
        return self.labelled(TRAIN)

    @property
    def test(self) -> list[Slice]:
        return self.labelled(TEST)

    def indices(self, label: str) -> np.ndarray:
        parts = [np.arange(s.start, s.end) for s in self.labelled(label)]
        return np.concatenate(parts) if parts else np.array([], dtype=int)

    def to_dict(self) -> dict:
        return {"length": self.length, "slices": [[s.start, s.end, s.label] for s in self.slices]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SliceSpec":
        return cls(tuple(Slice(int(a), int(b), str(c)) for a, b, c in d["slices"]), d.get("length"))


def make_slices(length: int, n_slices: int, pattern: str = "alternating", seed: int | None = None,
                first: str = TRAIN) -> SliceSpec:
    """Cut ``[0, length)`` into ``n_slices`` contiguous near-equal slices.

    ``alternating`` labels slices ``first``, other, ``first``, ...;
    ``random`` gives exactly ``ceil(n/2)`` slices the train label by a seeded
    shuffle.
    """
    if n_slices < 2:
        raise UsageError(f"n_slices must be >= 2, got {n_slices}")
    if n_slices > length:
        raise UsageError(f"n_slices ({n_slices}) exceeds length ({length})")
    if first not in (TRAIN, TEST):
        raise UsageError(f"first must be 'train' or 'test', got {first!r}")
    bounds = [i * length // n_slices for i in range(n_slices + 1)]
    if pattern == "alternating":
        other = TEST if first == TRAIN else TRAIN
        labels = [first if i % 2 == 0 else other for i in range(n_slices)]
    elif pattern == "random":
        rng = np.random.default_rng(seed)
        n_train = math.ceil(n_slices / 2)
        order = rng.permutation(n_slices)
        labels = [TEST] * n_slices
        for i in order[:n_train]:
            labels[i] = TRAIN
    else:
        raise UsageError(f"unknown slice pattern {pattern!r}; use 'alternating' or 'random'")
    return SliceSpec(tuple(Slice(a, b, lab) for a, b, lab in zip(bounds, bounds[1:], labels)), length)


def split_slices(length: int, cut: int, first: str = TRAIN) -> SliceSpec:
    """Two slices ``[0, cut)`` and ``[cut, length)``."""
    other = TEST if first == TRAIN else TRAIN
    return SliceSpec((Slice(0, cut, first), Slice(cut, length, other)), length)


# ---------------------------------------------------------------------------
# merging


def merge_runs(parts: Sequence[tuple[RunDataset, tuple[int, int] | None]], run_id: str | None = None) -> RunDataset:
    """Concatenate index ranges of several runs.

    A junction marker is recorded where each part begins (after the first),
    and junctions already inside a selected range are carried over.
    """
    if not parts:
        raise MergeError("merge_runs needs at least one part")
    ref = parts[0][0]
    names = ref.names
    pieces = {n: [] for n in names}
    junctions: list[int] = []
    offset = 0
    meta_parts = []
    for i, (ds, rng) in enumerate(parts):
        if abs(ds.rate - ref.rate) > RATE_RTOL * ref.rate:
            raise MergeError(f"rate mismatch: {ds.run_id!r} at {ds.rate:g} vs {ref.run_id!r} at {ref.rate:g}")
        if set(ds.names) != set(names):
            raise MergeError(f"channel mismatch: {ds.run_id!r} has {sorted(ds.names)}, expected {sorted(names)}")
        a, b = (0, ds.length) if rng is None else (int(rng[0]), int(rng[1]))
        if not 0 <= a < b <= ds.length:
            raise MergeError(f"range [{a}, {b}) invalid for run {ds.run_id!r} of length {ds.length}")
        if i > 0:
            junctions.append(offset)
        junctions.extend(offset + j - a for j in ds.junctions if a < j < b)
        for n in names:
            pieces[n].append(ds[n][a:b])
        meta_parts.append(f"{ds.run_id}[{a}:{b}]")
        offset += b - a
    if len(parts) == 1:
        ds, rng = parts[0]
        if rng is None or (rng[0] == 0 and rng[1] == ds.length):
            return ds
    meta = {"merged_from": " + ".join(meta_parts)}
    rid = run_id if run_id is not None else "+".join(p[0].run_id for p in parts)
    return RunDataset(rid, ref.rate, {n: np.concatenate(pieces[n]) for n in names}, meta, dict(ref.units), tuple(junctions))
