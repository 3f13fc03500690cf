import re

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "thermolen", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("thermolen")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed live and repeated in the terminal summary
_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def report(capsys):
    def record(number: int, passed: bool, detail: str):
        _CRITERIA[number] = (passed, detail)
        with capsys.disabled():
            print(f"\n{_criterion_line(number)}")
        return passed
    return record


def _criterion_line(number: int) -> str:
    passed, detail = _CRITERIA[number]
    return f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_runtest_logreport(report):
    # a criterion test that crashed before reporting still gets its FAIL line
    match = re.search(r"test_criterion_(\d+)", report.nodeid)
    if match and report.when == "call" and report.failed:
        number = int(match.group(1))
        _CRITERIA.setdefault(number, (False, f"did not complete: {report.longrepr.reprcrash.message}"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_criterion_line(number))
