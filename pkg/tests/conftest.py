import math

import pytest

from windtree import ModelParams


@pytest.fixture
def tail_params():
    return ModelParams.windtree(a=math.sqrt(2) / 4, r=0.05, theta_tan="1/1")


@pytest.fixture
def canonical_params():
    return ModelParams.windtree(a=0.4, r=0.1, theta_tan="1/1")


@pytest.fixture
def lorentz_params():
    return ModelParams.lorentz(0.3, 0.1)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance  # noqa: F401  (imported only when collected)

    lines = getattr(test_acceptance, "LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
