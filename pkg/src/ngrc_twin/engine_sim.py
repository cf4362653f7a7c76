"""Surrogate closed-loop turbine used to generate ground-truth engine runs.

The model is intentionally small: a first-order spool driven by a
proportional-integral speed controller acting on the fuel-to-air ratio,
with thrust and exhaust gas temperature given by quadratic maps of the
spool state. It stands in for a full thermodynamic simulator and produces
the two features a data-driven twin must learn: a nonlinear thrust/speed
relation and lagged transients after every setpoint step.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, UsageError

IDLE_SPEED = 0.3
MAX_SPEED = 1.0
SPEED_FLOOR = 0.1
DEFAULT_DURATION = 26.0

PROFILE_KINDS = ("unit_step", "ascending", "descending", "eccentric")


@dataclass(frozen=True)
class FlightProfile:
    """Piecewise-constant schedule of requested shaft speed.

    ``segments`` holds ``(start_time, requested_speed)`` pairs; each speed
    holds until the next start time. ``duration`` is the nominal run length
    used when ``simulate`` is called without an explicit duration.
    """

    segments: tuple[tuple[float, float], ...]
    duration: float = DEFAULT_DURATION

    def __post_init__(self):
        segs = tuple((float(t), float(r)) for t, r in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ConfigurationError("segments", "profile must contain at least one segment")
        if segs[0][0] != 0.0:
            raise ConfigurationError("segments", "first segment must start at t = 0")
        starts = [t for t, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigurationError("segments", "start times must be strictly increasing")
        for t, r in segs:
            if not SPEED_FLOOR <= r <= MAX_SPEED:
                raise ConfigurationError(
                    "segments", f"requested speed {r} at t={t} outside [{SPEED_FLOOR}, {MAX_SPEED}]"
                )
        if not self.duration > 0:
            raise ConfigurationError("duration", "must be positive")

    @property
    def speeds(self) -> np.ndarray:
        return np.array([r for _, r in self.segments])

    def requested(self, times) -> np.ndarray:
        """Requested speed at each time in ``times``."""
        starts = np.array([t for t, _ in self.segments])
        idx = np.searchsorted(starts, np.asarray(times, dtype=float), side="right") - 1
        return self.speeds[np.clip(idx, 0, None)]

    def to_dict(self) -> dict:
        return {"segments": [list(s) for s in self.segments], "duration": self.duration}

    @classmethod
    def from_dict(cls, d: dict) -> "FlightProfile":
        return cls(tuple(tuple(s) for s in d["segments"]), d.get("duration", DEFAULT_DURATION))


@dataclass(frozen=True)
class EngineParams:
    """Surrogate engine constants.

    Defaults put the fuel-to-air ratio near 0.02-0.03 at cruise and give a
    plateau thrust span of roughly 4 kN to 18 kN over the default profile.
    """

    dt: float = 0.015
    tau_spool: float = 0.8
    kp: float = 0.02
    ki: float = 0.05
    c_fuel: float = 35.0
    far_min: float = 0.002
    far_max: float = 0.034
    thrust_coeffs: tuple[float, float, float] = (16000.0, 1500.0, 2100.0)
    egt_coeffs: tuple[float, float, float] = (15000.0, 120.0, 400.0)
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "thrust_coeffs", tuple(float(c) for c in self.thrust_coeffs))
        object.__setattr__(self, "egt_coeffs", tuple(float(c) for c in self.egt_coeffs))
        self.validate()

    def validate(self) -> None:
        for name in ("dt", "tau_spool", "kp", "ki", "c_fuel", "far_min", "far_max", "noise_sigma"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(name, "must be finite")
        if self.dt <= 0:
            raise ConfigurationError("dt", f"must be > 0, got {self.dt}")
        if self.tau_spool <= 0:
            raise ConfigurationError("tau_spool", f"must be > 0, got {self.tau_spool}")
        if self.c_fuel <= 0:
            raise ConfigurationError("c_fuel", f"must be > 0, got {self.c_fuel}")
        if self.kp < 0 or self.ki < 0:
            raise ConfigurationError("kp" if self.kp < 0 else "ki", "PI gains must be non-negative")
        if not self.far_min < self.far_max:
            raise ConfigurationError("far_min", f"far_min ({self.far_min}) must be < far_max ({self.far_max})")
        if len(self.thrust_coeffs) != 3:
            raise ConfigurationError("thrust_coeffs", "expected (a2, a1, a0)")
        if len(self.egt_coeffs) != 3:
            raise ConfigurationError("egt_coeffs", "expected (b_far, b_n2, b0)")
        if not self.thrust_coeffs[0] > 0:
            raise ConfigurationError("thrust_coeffs", "a2 must be > 0")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma", "must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["thrust_coeffs"] = list(self.thrust_coeffs)
        d["egt_coeffs"] = list(self.egt_coeffs)
        return d


@dataclass(frozen=True)
class SimRecord:
    time: float
    requested_speed: float
    actual_speed: float
    thrust: float
    egt: float
    far: float


@dataclass
class SimRun:
    """Columnar result of :func:`simulate`; iterating yields ``SimRecord``."""

    time: np.ndarray
    requested_speed: np.ndarray
    actual_speed: np.ndarray
    thrust: np.ndarray
    egt: np.ndarray
    far: np.ndarray
    params: EngineParams = field(repr=False, default_factory=EngineParams)

    CHANNELS = ("requested_speed", "actual_speed", "thrust", "egt", "far")
    UNITS = {"requested_speed": "", "actual_speed": "", "thrust": "N", "egt": "degC", "far": ""}

    def __len__(self):
        return len(self.time)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i) -> SimRecord:
        return SimRecord(
            float(self.time[i]),
            float(self.requested_speed[i]),
            float(self.actual_speed[i]),
            float(self.thrust[i]),
            float(self.egt[i]),
            float(self.far[i]),
        )

    def columns(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.CHANNELS}


def n_samples(duration: float, dt: float) -> int:
    # tolerate representation error, e.g. 0.3 / 0.1 = 2.9999999999999996
    return int(math.floor(duration / dt + 1e-9)) + 1


def simulate(profile: FlightProfile, params: EngineParams | None = None, duration: float | None = None,
             initial_speed: float | None = None) -> SimRun:
    """Integrate the surrogate engine over ``duration`` seconds.

    The engine starts settled at ``initial_speed`` (default: the first
    requested speed), i.e. with the integrator holding the fuel-to-air ratio
    that sustains that speed. Anti-windup
    freezes the integrator on any step where the commanded ratio saturates.
    Noise is added to the thrust and EGT outputs only.
    """
    params = params or EngineParams()
    params.validate()
    duration = profile.duration if duration is None else float(duration)
    if not duration >= params.dt:
        raise UsageError(f"duration ({duration}) must be >= dt ({params.dt})")

    n = n_samples(duration, params.dt)
    time = np.arange(n) * params.dt
    req = profile.requested(time)
    a2, a1, a0 = params.thrust_coeffs
    b_far, b_n2, b0 = params.egt_coeffs

    actual = np.empty(n)
    far = np.empty(n)
    gain = params.dt / params.tau_spool

    speed = float(req[0] if initial_speed is None else initial_speed)
    integ = speed / (params.c_fuel * params.ki) if params.ki > 0 else 0.0
    for i in range(n):
        actual[i] = speed
        err = req[i] - speed
        trial = integ + err * params.dt
        raw = params.kp * err + params.ki * trial
        if params.far_min <= raw <= params.far_max:
            integ = trial
            f = raw
        else:
            f = min(max(params.kp * err + params.ki * integ, params.far_min), params.far_max)
        far[i] = f
        speed = speed + gain * (params.c_fuel * f - speed)

    rng = np.random.default_rng(params.seed)
    thrust = a2 * actual**2 + a1 * actual + a0
    egt = b_far * far + b_n2 * actual**2 + b0
    if params.noise_sigma > 0:
        thrust = thrust + rng.normal(0.0, params.noise_sigma * a2, n)
        egt = egt + rng.normal(0.0, params.noise_sigma * b0, n)
    return SimRun(time, req, actual, thrust, egt, far, params)


def default_profile() -> FlightProfile:
    """Notional flight: near full throttle, staircase down to near idle, back up to full."""
    speeds = (0.95, 0.85, 0.72, 0.58, 0.44, 0.30, 0.42, 0.56, 0.70, 0.84, 0.95)
    hold = DEFAULT_DURATION / len(speeds)
    return FlightProfile(tuple((round(i * hold, 9), r) for i, r in enumerate(speeds)), DEFAULT_DURATION)


def _staircase(lo: float, hi: float, steps: int, duration: float) -> FlightProfile:
    speeds = np.linspace(lo, hi, steps)
    hold = duration / steps
    return FlightProfile(tuple((round(i * hold, 9), float(r)) for i, r in enumerate(speeds)), duration)


def profile_library(kind: str, seed: int = 0, duration: float = DEFAULT_DURATION, steps: int = 8) -> FlightProfile:
    """Canonical test profiles: unit_step, ascending, descending, eccentric.

    ``eccentric`` draws ``steps`` random plateaus with random hold times; the
    draw is repeated from the same generator until the plateaus cover at
    least 80% of the allowed speed range.
    """
    if kind == "unit_step":
        return FlightProfile(((0.0, IDLE_SPEED), (round(duration / 4, 9), MAX_SPEED)), duration)
    if kind == "ascending":
        return _staircase(IDLE_SPEED, MAX_SPEED, steps, duration)
    if kind == "descending":
        return _staircase(MAX_SPEED, IDLE_SPEED, steps, duration)
    if kind == "eccentric":
        if steps < 2:
            raise UsageError("eccentric profile needs at least 2 plateaus")
        rng = np.random.default_rng(seed)
        full = MAX_SPEED - SPEED_FLOOR
        while True:
            speeds = np.round(rng.uniform(SPEED_FLOOR, MAX_SPEED, steps), 4)
            if speeds.max() - speeds.min() >= 0.8 * full:
                break
        holds = rng.uniform(0.5, 1.5, steps)
        starts = np.concatenate([[0.0], np.cumsum(holds[:-1])]) * duration / holds.sum()
        return FlightProfile(tuple((round(float(t), 9), float(r)) for t, r in zip(starts, speeds)), duration)
    raise UsageError(f"unknown profile kind {kind!r}; choose one of {', '.join(PROFILE_KINDS)}")


def sensor_channels(run: SimRun, rates: dict[str, float] | None = None):
    """Resample a fine-step run into per-channel sensor streams.

    Emulates a multirate logger: each channel is read by sample-and-hold at
    its own rate. ``run.params.dt`` must evenly divide every sampling period.
    Returns a list of :class:`ngrc_twin.dataset.Channel`.
    """
    from .dataset import Channel

    rates = rates or {"thrust": 1000.0, "egt": 25.0, "requested_speed": 10.0, "actual_speed": 10.0, "far": 10.0}
    out = []
    base_rate = 1.0 / run.params.dt
    for name, rate in rates.items():
        step = base_rate / rate
        if abs(step - round(step)) > 1e-6 or round(step) < 1:
            raise UsageError(f"channel {name}: rate {rate} is not a divisor of the simulation rate {base_rate:g}")
        out.append(Channel(name, SimRun.UNITS[name], float(rate), getattr(run, name)[:: int(round(step))].copy()))
    return out
