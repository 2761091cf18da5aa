import time

import numpy as np
import pytest

from helpers import ACCEPTANCE_LINES
from zofo.experiments import ExperimentConfig, run_comparison
from zofo.objective import random_objective
from zofo.plant import generate_random_plant


@pytest.fixture(scope="session")
def seed0():
    return generate_random_plant(0), random_objective(0)


@pytest.fixture(scope="session")
def reference_comparison():
    """Four-way comparison at the reference stepsizes, 10 seeds, 10^4 plant steps."""
    t0 = time.perf_counter()
    result = run_comparison(ExperimentConfig())
    return result, time.perf_counter() - t0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def parameter_selection(seed0):
    """Bound-optimal stepsize and smoothing parameter with mu measured in closed loop."""
    from zofo.validation import closed_loop_parameter_selection

    return closed_loop_parameter_selection(*seed0)


@pytest.fixture(scope="session")
def average_gradient_results(seed0, parameter_selection):
    from zofo.validation import average_gradient_checks

    return average_gradient_checks(*seed0, selection=parameter_selection)
