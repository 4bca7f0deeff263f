import numpy as np
import pytest

from needlet_bispectrum import build_window, make_power_spectrum


@pytest.fixture(scope="session")
def window2():
    return build_window(2.0)


@pytest.fixture(scope="session")
def cubic_spectrum():
    """C_l = l^-3 up to l = 256."""
    return make_power_spectrum([0, 0, 0, 1], 256)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":abc"))):
            terminalreporter.write_line(line)
