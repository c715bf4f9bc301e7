import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from oddnls.grid import Grid
from oddnls.soliton import GroundStateParams

settings.register_profile(
    "oddnls",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("oddnls")


@pytest.fixture(scope="session")
def params():
    return GroundStateParams(7.0, 1.0)


@pytest.fixture(scope="session")
def grid():
    return Grid(2048, 40.0)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(1024, 30.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
