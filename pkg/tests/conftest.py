import numpy as np
import pytest

from dynzeta.model import make_uniform_system
from dynzeta.single_orbit import OrbitSpectrum


@pytest.fixture(scope="session")
def two_shift():
    return make_uniform_system([[1, 1], [1, 1]], np.diag([2.0, 0.5]), split=(1, 1))


@pytest.fixture(scope="session")
def basic_spectrum():
    return OrbitSpectrum(1.0, (2.0,), (0.5,), 0, (1.0,))


def exact_two_shift(z, terms=200):
    """prod_{m>=1} (1 - 2^{1-m} e^{-z})^m."""
    z = complex(z)
    return complex(np.prod([(1 - 2.0 ** (1 - m) * np.exp(-z)) ** m for m in range(1, terms)]))


# acceptance lines collected by tests/test_acceptance.py, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
