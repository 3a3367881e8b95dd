import numpy as np
import pytest

from fracsol.ground_state import ground_state
from fracsol.spectral import SpectralGrid


@pytest.fixture(scope="session")
def gs1():
    """sech soliton (s = 1, p = 1) on a coarse grid."""
    return ground_state(1, 1.0, 1.0, 1024, 20.0)


@pytest.fixture(scope="session")
def gs1_fine():
    return ground_state(1, 1.0, 1.0, 4096, 20.0)


@pytest.fixture(scope="session")
def gs075():
    return ground_state(1, 0.75, 1.0, 4096, 100.0)


@pytest.fixture(scope="session")
def gs075_coarse():
    return ground_state(1, 0.75, 1.0, 1024, 60.0)


@pytest.fixture
def grid1():
    return SpectralGrid(1, 256, 20.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sech_soliton(x):
    return np.sqrt(2.0) / np.cosh(np.sqrt(2.0) * x)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULT_LINES
    except ImportError:
        return
    if RESULT_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULT_LINES):
            terminalreporter.write_line(RESULT_LINES[k])
