import numpy as np
import pytest

from ngrc_twin.calibration import (
    CalibrationFit,
    CalibrationPoint,
    apply_calibration,
    average_readings,
    calibrate_channel,
    fit_calibration,
    points_from_meta,
    read_points,
    synthetic_session,
)
from ngrc_twin.dataset import Channel, RawRun
from ngrc_twin.errors import DataFormatError, NumericError, UsageError


def test_two_point_exact():
    fit = fit_calibration([CalibrationPoint(0.0, 0.0), CalibrationPoint(10.0, 1.0)])
    assert fit.slope == 10.0 and fit.intercept == 0.0 and fit.mse == 0.0 and fit.n_points == 2


def test_thirteen_point_session_shape(rng):
    pts = synthetic_session(50.0, 2.0, 0.1, rng)
    assert len(pts) == 13
    nominal = [p.mean_voltage * 50 + 2 for p in pts]
    assert sum(f > 1 for f in nominal) == 6 and sum(f < -1 for f in nominal) == 6
    assert sum(abs(f) < 1e-9 for f in nominal) == 1


def test_errors():
    with pytest.raises(UsageError):
        fit_calibration([CalibrationPoint(1.0, 1.0)])
    with pytest.raises(NumericError):
        fit_calibration([CalibrationPoint(1.0, 2.0), CalibrationPoint(3.0, 2.0)])
    with pytest.raises(UsageError):
        CalibrationPoint(1.0, 1.0, 0)


def test_apply():
    fit = CalibrationFit(10.0, 0.0, 0.0, 2)
    np.testing.assert_array_equal(apply_calibration(fit, [0, 1, 2]), [0, 10, 20])
    assert apply_calibration(CalibrationFit(3.5, -1.25, 0.0, 2), [0.0])[0] == -1.25


def test_round_trip_recovers_line():
    v = np.linspace(-2.0, 2.0, 13)
    truth = CalibrationFit(48.75, -3.125, 0.0, 13)
    f = apply_calibration(truth, v)
    fit = fit_calibration([CalibrationPoint(fi, vi) for fi, vi in zip(f, v)])
    assert abs(fit.slope - truth.slope) < 1e-10
    assert abs(fit.intercept - truth.intercept) < 1e-10


def test_matches_normal_equations(rng):
    pts = synthetic_session(50.0, 2.0, 0.1, rng)
    v = np.array([p.mean_voltage for p in pts])
    f = np.array([p.applied_force for p in pts])
    A = np.column_stack([v, np.ones_like(v)])
    coef = np.linalg.solve(A.T @ A, A.T @ f)
    fit = fit_calibration(pts)
    assert fit.slope == pytest.approx(coef[0], rel=1e-12)
    assert fit.intercept == pytest.approx(coef[1], rel=1e-9, abs=1e-12)
    assert fit.mse == pytest.approx(np.mean((A @ coef - f) ** 2), rel=1e-9)


def test_residuals_sum_to_zero(rng):
    pts = synthetic_session(50.0, 2.0, 0.1, rng)
    fit = fit_calibration(pts)
    f = np.array([p.applied_force for p in pts])
    resid = f - apply_calibration(fit, [p.mean_voltage for p in pts])
    assert abs(resid.sum()) <= 1e-9 * np.linalg.norm(f)


def test_order_invariant(rng):
    pts = synthetic_session(50.0, 2.0, 0.1, rng)
    a = fit_calibration(pts)
    b = fit_calibration(pts[::-1])
    assert a.slope == pytest.approx(b.slope, rel=1e-13)
    assert a.intercept == pytest.approx(b.intercept, rel=1e-12, abs=1e-12)


def test_mse_non_increasing_with_on_line_point(rng):
    pts = synthetic_session(50.0, 2.0, 0.1, rng)
    fit = fit_calibration(pts)
    extra = CalibrationPoint(float(apply_calibration(fit, [0.37])[0]), 0.37)
    assert fit_calibration(pts + [extra]).mse <= fit.mse


def test_slope_stderr_matches_formula(rng):
    pts = synthetic_session(50.0, 2.0, 0.1, rng)
    fit = fit_calibration(pts)
    v = np.array([p.mean_voltage for p in pts])
    assert fit.slope_stderr(0.1) == pytest.approx(0.1 / np.sqrt(np.sum((v - v.mean()) ** 2)))


def test_average_readings():
    p = average_readings(-20.0, [1.0, 2.0, 3.0, 4.0])
    assert p.mean_voltage == 2.5 and p.n_samples == 4 and p.applied_force == -20.0


def test_points_csv_and_meta():
    pts = read_points("volts,newtons\n0.0,0.0\n1.0,10.0\n")
    assert [(p.mean_voltage, p.applied_force) for p in pts] == [(0.0, 0.0), (1.0, 10.0)]
    with pytest.raises(DataFormatError):
        read_points("0.0,0.0\n1.0,x\n")
    meta = {"calibration_points": "0.0:0.0 1.0:10.0 2.0:20.0"}
    assert fit_calibration(points_from_meta(meta)).slope == pytest.approx(10.0)


def test_calibrate_channel():
    run = RawRun("r", (Channel("lc_v", "V", 1000.0, [0.0, 1.0]), Channel("rpm", "", 10.0, [1.0])))
    out = calibrate_channel(run, CalibrationFit(10.0, 1.0, 0.0, 2), "lc_v")
    assert out.names == ["thrust", "rpm"]
    np.testing.assert_array_equal(out.channel("thrust").samples, [1.0, 11.0])
