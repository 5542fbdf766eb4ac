import functools
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hybridcouple.analysis import find_equilibrium, jacobian_fd  # noqa: E402
from hybridcouple.scenario import load_scenario  # noqa: E402


@functools.lru_cache(maxsize=None)
def solved(name):
    """(scenario, system, equilibrium, linearization) for a shipped scenario."""
    scn = load_scenario(name)
    sys_ = scn.build()
    u, d = scn.free_inputs(sys_)
    eq = None
    for v in (scn.settings.v_bus_guess,) + tuple(scn.settings.seeds):
        eq = find_equilibrium(sys_, scn.initial_guess(v, sys_), u, d, scn.settings.equilibrium)
        if eq.converged:
            break
    lin = jacobian_fd(sys_, eq.x, u, d)
    return scn, sys_, eq, lin


@pytest.fixture(scope="session")
def case_a():
    return solved("case_a")


@pytest.fixture(scope="session")
def case_b():
    return solved("case_b")


@pytest.fixture(scope="session")
def uncoupled():
    return solved("uncoupled")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
