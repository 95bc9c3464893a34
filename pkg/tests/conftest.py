import numpy as np
import pytest

from gridvine import info

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ar1_d5():
    """AR(1) rho=0.7 Gaussian data, d=5: (fit rows, held-out rows), n=20000 each."""
    data = info.ar1_sample(40_000, 5, 0.7, 11)
    return data[:20_000], data[20_000:]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
