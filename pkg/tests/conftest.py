import numpy as np
import pytest

from cbalance.data import gen_synthetic

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def shifted_ds():
    return gen_synthetic(300, 300, 2, 2.0, "linear", 0.0, seed=11)


@pytest.fixture(scope="session")
def balanced_ds():
    return gen_synthetic(300, 300, 2, 0.0, "linear", 0.0, seed=12)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
