"""
Lookback, skip and ridge parameter
==================================

The full search over lookback and skip in 1..3 and alpha from 1e-8 to
1e-1 is 72 trainings; each takes about a millisecond.
"""

# %%
from ngrc_twin import EngineParams, RunDataset, default_profile, make_slices, simulate
from ngrc_twin.evaluation import GridSpec, grid_search, grid_table_csv

run = simulate(default_profile(), EngineParams(noise_sigma=0.005))
ds = RunDataset("default", 1 / run.params.dt, run.columns())
slices = make_slices(ds.length, 9, first="test")

best, table = grid_search(ds, slices, GridSpec(), ["requested_speed", "actual_speed", "egt", "far"], "thrust")
print(f"{len(table)} combinations; best k={best.k} s={best.s} alpha={best.alpha:g}")

# %%
ranked = sorted((r for r in table if r.status == "ok"), key=lambda r: r.nrmse)
for r in ranked[:10]:
    print(f"k={r.k} s={r.s} alpha={r.alpha:7.0e} d={r.d:3d}  NRMSE {100 * r.nrmse:.3f}%")

with open("demo_out/grid.csv", "w") as fh:
    fh.write(grid_table_csv(table))
