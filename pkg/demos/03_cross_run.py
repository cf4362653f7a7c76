"""
Generalizing across engine runs
===============================

Two ways of testing a twin on data it never saw: train on one run and
predict another, and stitch halves of two runs together so each half is
used once for training and once for testing.
"""

# %%
from ngrc_twin import EngineParams, RunDataset, profile_library, simulate
from ngrc_twin.dataset import Slice, SliceSpec, merge_runs
from ngrc_twin.evaluation import evaluate
from ngrc_twin.ngrc import Metaparameters, fit_model

inputs = ["requested_speed", "actual_speed", "egt", "far"]


def as_dataset(run, run_id):
    return RunDataset(run_id, 1 / run.params.dt, run.columns(), units=run.UNITS)


base = EngineParams()
b_far, b_n2, b0 = base.egt_coeffs
run_a = as_dataset(simulate(profile_library("eccentric", seed=11), EngineParams(noise_sigma=0.005, seed=11)), "A")
# a warmer day: the EGT offset rises by 2%
run_b = as_dataset(
    simulate(profile_library("ascending"), EngineParams(noise_sigma=0.005, seed=12, egt_coeffs=(b_far, b_n2, 1.02 * b0))),
    "B",
)

# %%
model = fit_model(run_a, None, inputs, "thrust", Metaparameters(1, 1, 1e-5))
rep = evaluate(model, run_b, SliceSpec((Slice(0, run_b.length, "test"),)))
print(f"train on A, test on B: NRMSE {100 * rep.nrmse:.3f}%")

# %%
# First half of A + second half of B for training, the complementary
# halves for testing. Junction markers keep delay taps inside one run.
ha, hb = run_a.length // 2, run_b.length // 2
train_ds = merge_runs([(run_a, (0, ha)), (run_b, (hb, run_b.length))])
test_ds = merge_runs([(run_a, (ha, run_a.length)), (run_b, (0, hb))])
print("junctions:", train_ds.junctions, test_ds.junctions)

model = fit_model(train_ds, None, inputs, "thrust", Metaparameters(1, 1, 1e-5))
rep = evaluate(model, test_ds, SliceSpec((Slice(0, test_ds.length, "test"),)))
print(f"mixed halves: NRMSE {100 * rep.nrmse:.3f}% over {rep.n_test} points")
