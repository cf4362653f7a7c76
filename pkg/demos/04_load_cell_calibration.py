"""
Load-cell calibration
=====================

Six weights hung in tension and in compression plus a zero-load reading
give 13 averaged points. A least-squares line turns volts into newtons.
"""

# %%
import numpy as np

from ngrc_twin.calibration import apply_calibration, average_readings, fit_calibration

rng = np.random.default_rng(0)
true_slope, true_offset = 52.3, -1.8  # N/V, N
weights = [9.81 * m for m in (0.5, 1.0, 2.0, 5.0, 10.0, 20.0)]
forces = [0.0] + weights + [-w for w in weights]

# thousands of noisy raw readings per weight, averaged to one point each
points = []
for f in forces:
    volts = (f - true_offset) / true_slope + rng.normal(0, 2e-3, 5000)
    points.append(average_readings(f, volts))

fit = fit_calibration(points)
print(f"slope {fit.slope:.4f} N/V   intercept {fit.intercept:.4f} N   MSE {fit.mse:.3e} N^2   ({fit.n_points} points)")
print("standard error of slope:", fit.slope_stderr())

# %%
# Converting a recorded voltage trace to thrust.
trace = np.array([0.05, 0.8, 1.6, 1.9])
print(apply_calibration(fit, trace))
