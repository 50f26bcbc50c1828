import numpy as np
import pytest
from hypothesis import settings

from dephydro.clocks import Purpose, RngKey

# first calls pay for numba compilation
settings.register_profile("default", deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, passed: bool, message: str) -> bool:
    line = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {message}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def key():
    return RngKey(12345, Purpose.CLOCK)


@pytest.fixture
def rng():
    return np.random.default_rng(987)
