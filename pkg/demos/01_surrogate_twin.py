"""
Digital twin of a simulated turbine
===================================

Generate a run from the surrogate engine, cut it into alternating
train/test slices, pick the ridge parameter on the held-out slices and
look at the predicted thrust.
"""

# %%
# A notional flight: near full throttle, down a staircase to near idle,
# and back up. 26 s sampled every 15 ms gives 1,734 samples.
from pathlib import Path

import numpy as np

from ngrc_twin import EngineParams, RunDataset, default_profile, make_slices, simulate
from ngrc_twin.evaluation import GridSpec, evaluate, grid_search, prediction_rows, write_prediction_csv
from ngrc_twin.ngrc import fit_model

run = simulate(default_profile(), EngineParams(noise_sigma=0.005))
ds = RunDataset("default", 1 / run.params.dt, run.columns(), units=run.UNITS)
print(f"{ds.length} samples, thrust {ds['thrust'].min():.0f} .. {ds['thrust'].max():.0f} N")

# %%
# Nine slices starting with a test slice: four for training, five for testing.
slices = make_slices(ds.length, 9, first="test")
inputs = ["requested_speed", "actual_speed", "egt", "far"]

# %%
# One lookback tap and skip 1, so 4 channels give 8 linear features,
# 36 quadratic monomials and a constant. Only alpha is searched here.
best, table = grid_search(ds, slices, GridSpec((1,), (1,), tuple(10.0**e for e in range(-8, 0))), inputs, "thrust")
for row in table:
    print(f"alpha={row.alpha:8.0e}  NRMSE={100 * row.nrmse:.3f}%")

model = fit_model(ds, slices, inputs, "thrust", best)
report = evaluate(model, ds, slices)
print(f"best alpha {best.alpha:g}: test NRMSE {100 * report.nrmse:.3f}% on {report.n_test} points, "
      f"trained on {report.n_train} points in {1e3 * model.train_time:.2f} ms")

# %%
# Plot-ready output: time, prediction, truth, slice label.
out = Path("demo_out")
out.mkdir(exist_ok=True)
rows = prediction_rows(model, ds, slices)
write_prediction_csv(rows, out / "surrogate_predictions.csv")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    t, truth, pred, label = map(np.array, zip(*rows))
    fig, ax = plt.subplots(figsize=(9, 3.5))
    for sl in slices.train:
        ax.axvspan(t[sl.start], t[sl.end - 1], color="tab:green", alpha=0.15, lw=0)
    ax.plot(t, truth, "k", lw=1, label="surrogate")
    ax.plot(t, pred, "tab:red", lw=1, ls="--", label="NG-RC")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("thrust [N]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "surrogate_twin.png", dpi=120)
