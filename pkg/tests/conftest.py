import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from transport_ar import Grid, ProbGrid, TransportMap

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by test_acceptance, echoed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def grid():
    return Grid(0.0, 1.0, 101)


@pytest.fixture
def fine_grid():
    return Grid(0.0, 1.0, 1001)


@pytest.fixture
def prob():
    return ProbGrid(201)


@pytest.fixture
def square(grid):
    return TransportMap.from_callable(grid, lambda x: x**2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)
