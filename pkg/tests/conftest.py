import numpy as np
import pytest

from qrevdiff.operators import HilbertSpace
from qrevdiff.phase_space import PhaseGrid
from qrevdiff.symbols import Symbol

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def space64():
    return HilbertSpace(64, "position", 8.0)


@pytest.fixture(scope="session")
def grid256():
    return PhaseGrid.symmetric(6.0, 6.0, 256)


@pytest.fixture(scope="session")
def grid128():
    return PhaseGrid.symmetric(6.0, 6.0, 128)


@pytest.fixture(scope="session")
def damped_symbols():
    Q, P = Symbol.Q(), Symbol.P()
    return (Q * Q + P * P) / 2, [(Q + P * 1j) / np.sqrt(2)]


def random_density(rng, d):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng, d):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (A + A.conj().T) / 2


def random_unitary(rng, d):
    Z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))
