import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ruelle.alphabet import finite_measure
from ruelle.potential import constant, first_coordinate, two_coordinate
from ruelle.seqspace import Grid

settings.register_profile(
    "ruelle", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
settings.load_profile("ruelle")

LOG2, LOG3 = math.log(2.0), math.log(3.0)

_criteria: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Remember one acceptance line and print it immediately."""
    _criteria[number] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_criteria):
        ok, detail = _criteria[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k:2d}: {detail}")
    passed = sum(ok for ok, _ in _criteria.values())
    terminalreporter.write_line(f"{passed}/{len(_criteria)} criteria pass")


@pytest.fixture
def binary():
    return finite_measure(size=2)


@pytest.fixture
def grid6(binary):
    return Grid(binary, 6, 0)


@pytest.fixture
def grid8(binary):
    return Grid(binary, 8, 0)


@pytest.fixture
def f_first():
    return first_coordinate([0.0, LOG3])


@pytest.fixture
def f_two():
    return two_coordinate([[0.0, LOG2], [LOG3, 0.0]])


@pytest.fixture
def f_zero():
    return constant(0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
