"""Data-driven digital twin of a turbine engine built on a next-generation reservoir computer."""

__version__ = "0.1.0"

from .calibration import CalibrationFit, CalibrationPoint, apply_calibration, fit_calibration
from .dataset import (
    Channel,
    NormalizationSpec,
    RawRun,
    RunDataset,
    Slice,
    SliceSpec,
    align,
    apply_normalization,
    fit_normalization,
    load_run,
    make_slices,
    merge_runs,
)
from .engine_sim import EngineParams, FlightProfile, default_profile, profile_library, simulate
from .evaluation import EvalReport, GridSpec, benchmark, evaluate, grid_search, nrmse
from .ngrc import (
    FeatureMatrix,
    Metaparameters,
    StepPredictor,
    TrainedModel,
    build_features,
    deserialize,
    fit_model,
    predict,
    predict_run,
    serialize,
    train,
)
