import numpy as np
import pytest

from tentlab.grid import make_grid


@pytest.fixture
def grid1():
    return make_grid(1, 128, 16.0)


@pytest.fixture
def grid2():
    return make_grid(2, 32, 8.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = []


def record(number: int, title: str, passed: bool, detail: str) -> None:
    """Register one acceptance verdict; the terminal summary prints them in order."""
    ACCEPTANCE.append((number, title, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(
            f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {title}: {detail}")
