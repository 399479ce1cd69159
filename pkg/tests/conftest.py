import numpy as np
import pytest

from hlab.equilibria import default_seeds, scan_diagram
from hlab.grid import make_grid


@pytest.fixture(scope="session")
def grid():
    return make_grid()


@pytest.fixture(scope="session")
def scan_stable_regime(grid):
    return scan_diagram([-1.2], lambda c: default_seeds(c), grid)


@pytest.fixture(scope="session")
def f0(scan_stable_regime):
    (e,) = scan_stable_regime.equilibria
    return e


@pytest.fixture(scope="session")
def scan_c0(grid):
    return scan_diagram([0.0], lambda c: default_seeds(c), grid)


@pytest.fixture(scope="session")
def f1(scan_c0):
    return next(e for e in scan_c0.equilibria if e.unstable_dim == 2)


@pytest.fixture(scope="session")
def stable_c0(scan_c0):
    return next(e for e in scan_c0.equilibria if e.unstable_dim == 0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
