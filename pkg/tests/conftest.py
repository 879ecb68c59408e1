import numpy as np
import pytest

from kreboot import DataGenConfig, RadialKernel, generate

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def wendland():
    return RadialKernel.wendland31()


@pytest.fixture
def equilateral():
    """Three points at mutual distance 0.5."""
    s = 0.5
    return np.array([[0.0, 0.0, 0.0], [s, 0.0, 0.0], [s / 2, s * np.sqrt(3) / 2, 0.0]])


@pytest.fixture(scope="session")
def instance20():
    return generate(DataGenConfig(20, 1.0, 42))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
