import numpy as np
import pytest

from common import COARSE, SPEC, X0, coarse_instruments
from spxvix_ot.problem import CalibrationProblem


@pytest.fixture(scope="session")
def coarse_problem():
    return CalibrationProblem.build(coarse_instruments(), SPEC, X0, COARSE)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria: one PASS/FAIL line each in the terminal summary

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    number, title = marker.args
    ok = _criteria.get(number, (title, True))[1]
    _criteria[number] = (title, ok and rep.passed if rep.when == "call" else False)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
