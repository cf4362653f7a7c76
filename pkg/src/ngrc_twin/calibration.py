"""Load-cell calibration: a straight line from amplifier volts to newtons.

A calibration session hangs known weights in tension and compression plus
one zero-load reading; thousands of raw readings per weight are averaged
to one point, and force is regressed on voltage by ordinary least squares.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import DataFormatError, NumericError, UsageError


@dataclass(frozen=True)
class CalibrationPoint:
    applied_force: float  # N, negative in compression
    mean_voltage: float
    n_samples: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise UsageError(f"n_samples must be >= 1, got {self.n_samples}")
        if not (math.isfinite(self.mean_voltage) and math.isfinite(self.applied_force)):
            raise UsageError("calibration point must be finite")


@dataclass(frozen=True)
class CalibrationFit:
    slope: float  # N / V
    intercept: float  # N
    mse: float  # N^2
    n_points: int
    voltage_ss: float = float("nan")  # sum of squared voltage deviations, for standard errors

    def __post_init__(self):
        if self.n_points < 2:
            raise UsageError("a calibration fit needs at least 2 points")
        if self.mse < 0:
            raise UsageError("mse must be >= 0")

    def slope_stderr(self, sigma: float | None = None) -> float:
        """Standard error of the slope.

        With ``sigma`` given the known force noise is used; otherwise the
        residual variance with ``n - 2`` degrees of freedom.
        """
        if sigma is None:
            if self.n_points <= 2:
                return float("nan")
            sigma = math.sqrt(self.mse * self.n_points / (self.n_points - 2))
        return sigma / math.sqrt(self.voltage_ss)

    def __call__(self, voltages):
        return apply_calibration(self, voltages)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationFit":
        return cls(float(d["slope"]), float(d["intercept"]), float(d["mse"]), int(d["n_points"]),
                   float(d.get("voltage_ss", float("nan"))))


def average_readings(applied_force: float, raw_voltages: Sequence[float]) -> CalibrationPoint:
    """Collapse the raw readings taken under one weight into a single point."""
    v = np.asarray(raw_voltages, dtype=float)
    if v.size == 0:
        raise UsageError("no readings to average")
    return CalibrationPoint(float(applied_force), float(v.mean()), int(v.size))


def fit_calibration(points: Sequence[CalibrationPoint]) -> CalibrationFit:
    """Least-squares line ``force = slope * voltage + intercept``."""
    if len(points) < 2:
        raise UsageError(f"need at least 2 calibration points, got {len(points)}")
    v = np.array([p.mean_voltage for p in points], dtype=float)
    f = np.array([p.applied_force for p in points], dtype=float)
    v_mean = v.mean()
    dv = v - v_mean
    sxx = float(dv @ dv)
    if sxx <= 0 or np.all(v == v[0]):
        raise NumericError("all calibration voltages are identical; slope is undetermined")
    slope = float(dv @ (f - f.mean())) / sxx
    intercept = float(f.mean() - slope * v_mean)
    resid = f - (slope * v + intercept)
    return CalibrationFit(slope, intercept, float(np.mean(resid**2)), len(points), sxx)


def apply_calibration(fit: CalibrationFit, voltages) -> np.ndarray:
    return fit.slope * np.asarray(voltages, dtype=float) + fit.intercept


def read_points(text: str) -> list[CalibrationPoint]:
    """Parse a two-column ``volts,newtons`` CSV; a non-numeric first row is a header."""
    points = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if len(row) < 2:
            raise DataFormatError("expected two columns (volts, newtons)", line=lineno)
        try:
            volts, newtons = float(row[0]), float(row[1])
        except ValueError:
            if not points and lineno == 1:
                continue
            raise DataFormatError("non-numeric calibration cell", line=lineno) from None
        n = int(float(row[2])) if len(row) > 2 and row[2].strip() else 1
        points.append(CalibrationPoint(newtons, volts, n))
    if not points:
        raise DataFormatError("no calibration points found")
    return points


def load_points(path) -> list[CalibrationPoint]:
    with open(path, encoding="utf-8") as fh:
        return read_points(fh.read())


def points_from_meta(meta: dict, key: str = "calibration_points") -> list[CalibrationPoint]:
    """Points embedded in run metadata as ``volts:newtons`` pairs separated by spaces."""
    raw = str(meta.get(key, "")).split()
    if not raw:
        raise DataFormatError(f"run metadata has no {key!r} entry")
    points = []
    for pair in raw:
        try:
            v, f = pair.split(":")
            points.append(CalibrationPoint(float(f), float(v)))
        except ValueError:
            raise DataFormatError(f"bad calibration pair {pair!r} in metadata") from None
    return points


def calibrate_channel(run, fit: CalibrationFit, voltage_channel: str, thrust_channel: str = "thrust"):
    """Replace a raw voltage channel of a :class:`RawRun` with calibrated thrust."""
    from .dataset import Channel, RawRun

    out = []
    for ch in run.channels:
        if ch.name == voltage_channel:
            ch = Channel(thrust_channel, "N", ch.rate, apply_calibration(fit, ch.samples), ch.start_time)
        out.append(ch)
    if voltage_channel not in run.names:
        raise UsageError(f"run {run.run_id!r} has no channel {voltage_channel!r}")
    return RawRun(run.run_id, tuple(out), {**run.meta, "calibration": f"{fit.slope!r}*V + {fit.intercept!r}"})


def synthetic_session(slope: float, intercept: float, sigma: float, rng: np.random.Generator,
                      weights: Sequence[float] = (10.0, 20.0, 50.0, 100.0, 150.0, 200.0)) -> list[CalibrationPoint]:
    """Thirteen points: each weight in tension and compression plus zero load.

    Voltages are exact; ``sigma`` newtons of Gaussian noise is put on the force
    axis so that the usual OLS error model holds.
    """
    forces = np.concatenate([[0.0], np.asarray(weights), -np.asarray(weights)])
    volts = (forces - intercept) / slope
    noisy = forces + rng.normal(0.0, sigma, forces.size)
    return [CalibrationPoint(float(f), float(v)) for f, v in zip(noisy, volts)]
