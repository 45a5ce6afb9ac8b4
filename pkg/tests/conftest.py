import numpy as np
import pytest

from compstab.model import AutonomousField, get_system


@pytest.fixture(scope="session")
def cubic():
    return get_system("cubic_scalar")


@pytest.fixture(scope="session")
def brockett():
    return get_system("brockett_integrator")


@pytest.fixture(scope="session")
def state_only():
    return get_system("state_only")


@pytest.fixture(scope="session")
def ex2d():
    return get_system("example_2d")


@pytest.fixture(scope="session")
def ex2d_target():
    return AutonomousField.from_strings(["x1^2 + x2^2 + x2", "-2*x2 - x1/2"])


def ex2d_control(x):
    x1, x2 = x
    return np.cbrt(-2 * x2 - x1 / 2 - x1 * x2 - x2 ** 2)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
