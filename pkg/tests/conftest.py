import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from censadd import IntegrationDensity, SimulationTruth, two_covariate_model  # noqa: E402


@pytest.fixture(scope="session")
def model():
    return two_covariate_model(0)


@pytest.fixture(scope="session")
def truth(model):
    return SimulationTruth(model)


@pytest.fixture(scope="session")
def q_full():
    return [IntegrationDensity.uniform(-1, 1)] * 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


def record_acceptance(number, ok, detail):
    """Store one acceptance verdict; all verdicts are printed after the run."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
