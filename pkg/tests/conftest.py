import numpy as np
import pytest

from wavefloquet.shooting import ShootingSetup, linear_standing_guess, minimize
from wavefloquet.spectral import MeshSchedule
from wavefloquet.state import PhysParams

# acceptance results, printed at the end of the run
ACCEPTANCE = {}


def record(criterion, passed, detail):
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(str(k).rstrip("abcdefgh")), str(k))):
        terminalreporter.write_line(ACCEPTANCE[key])


@pytest.fixture(scope="session")
def deep():
    return PhysParams()


@pytest.fixture(scope="session")
def small_standing(deep):
    """Converged deep-water standing wave, c1 = 0.01, M = 32, n = 12."""
    setup = ShootingSetup(MeshSchedule.uniform(32, 16), deep)
    res = minimize(linear_standing_guess(0.01, 12, deep), setup, frozen=1)
    assert res.converged
    return res, setup


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
