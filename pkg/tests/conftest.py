import numpy as np
import pytest

from afc_sim.model import GaussianEnvelope, UniformEnvelope, build_comb

# Lines collected by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def engineered_comb():
    return build_comb(7, 40.0, 3000.0, 10, GaussianEnvelope(30.0, 190.0))


@pytest.fixture(scope="session")
def uniform_comb():
    return build_comb(7, 40.0, 3000.0, 10, UniformEnvelope(30.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
