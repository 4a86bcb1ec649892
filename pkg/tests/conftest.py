import time

import pytest

from hill_orbits.fixtures import fixture_row
from hill_orbits.integrator import DEFAULT_CONFIG
from hill_orbits.symmetries import OrbitSeed, refine_orbit, select_crossing


def refine_row(family, gamma, index=0):
    row = fixture_row(family, gamma, index=index)
    return refine_orbit(select_crossing(row.seed(), row.t_hint))


@pytest.fixture(scope="session")
def cfg():
    return DEFAULT_CONFIG


@pytest.fixture(scope="session")
def variational():
    return refine_orbit(OrbitSeed("rho1", "rho2", 6.5088, {"q1": 0.176097}, family="g"))


@pytest.fixture(scope="session")
def g1v_orbit():
    return refine_row("g1v", 3.046842)


@pytest.fixture(scope="session")
def g2v_orbit():
    return refine_row("g2v", 1.30865)


@pytest.fixture(scope="session")
def gprime_orbit():
    return refine_row("g'", 4.35)


_ACCEPTANCE: dict = {}
_SUITE_LIMIT = 600.0


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_sessionstart(session):
    session.config._hill_t0 = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    elapsed = time.perf_counter() - config._hill_t0
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])
    status = "PASS" if elapsed < _SUITE_LIMIT else "FAIL"
    terminalreporter.write_line(f"criterion 8 (suite runtime): {status} {elapsed:.0f}s < {_SUITE_LIMIT:.0f}s")
