"""
How fast is the twin?
=====================

Median of 31 repetitions for training (feature construction plus the
ridge solve) and for streaming inference, one sample at a time.
"""

# %%
from ngrc_twin import EngineParams, RunDataset, default_profile, make_slices, simulate
from ngrc_twin.evaluation import benchmark
from ngrc_twin.ngrc import Metaparameters, StepPredictor, fit_model

run = simulate(default_profile(), EngineParams(noise_sigma=0.005))
ds = RunDataset("default", 1 / run.params.dt, run.columns())
slices = make_slices(ds.length, 9, first="test")
inputs = ["requested_speed", "actual_speed", "egt", "far"]
model = fit_model(ds, slices, inputs, "thrust", Metaparameters(1, 1, 1e-5))

rep = benchmark(model, ds, slices)
print(f"training on {rep.n_train} points: {1e3 * rep.train_time:.3f} ms")
print(f"inference: {1e6 * rep.step_time:.2f} us per step (~{1 / rep.step_time / 1e3:.0f} kHz)")

# %%
# The same streaming predictor, as it would sit next to a live ECU feed.
sp = StepPredictor(model)
for row in ds.matrix(inputs).T[:5]:
    print(sp.step(row))
