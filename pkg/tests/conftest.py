import numpy as np
import pytest

from vpctl.equilibria import EquilibriumSpec
from vpctl.grid import PhaseGrid


@pytest.fixture(scope="session")
def grid():
    return PhaseGrid()


@pytest.fixture(scope="session")
def small_grid():
    return PhaseGrid(nx=16, nv=24)


@pytest.fixture(scope="session")
def two_stream():
    return EquilibriumSpec("two_stream_1d")


@pytest.fixture(scope="session")
def bump_on_tail():
    return EquilibriumSpec("bump_on_tail_1d")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
