import numpy as np
import pytest

from ngrc_twin.dataset import RunDataset
from ngrc_twin.engine_sim import EngineParams, default_profile, simulate

SIM_INPUTS = ["requested_speed", "actual_speed", "egt", "far"]

_acceptance_lines = []


@pytest.fixture
def acceptance_log():
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


def run_dataset(run, run_id="sim"):
    return RunDataset(run_id, 1.0 / run.params.dt, run.columns(), units=run.UNITS)


@pytest.fixture(scope="session")
def default_run():
    return simulate(default_profile(), EngineParams(noise_sigma=0.005))


@pytest.fixture(scope="session")
def default_ds(default_run):
    return run_dataset(default_run, "default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
