import time

import numpy as np
import pytest

from oqb.protocol import ProtocolConfig, run_ensemble
from oqb.qstate import Hamiltonian, QubitState


@pytest.fixture(scope="session")
def H0():
    return Hamiltonian.qubit()


@pytest.fixture(scope="session")
def default_config():
    return ProtocolConfig()


ENSEMBLE_SECONDS = {}
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def ensemble(default_config):
    """The 1000-realisation run at default parameters, shared by all tests."""
    t0 = time.perf_counter()
    ens = run_ensemble(default_config, workers=4)
    ENSEMBLE_SECONDS["default"] = time.perf_counter() - t0
    return ens


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def random_state(rng, pure=False):
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    r = 1.0 if pure else rng.random() ** (1 / 3)
    return QubitState.from_bloch(*(r * v))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
