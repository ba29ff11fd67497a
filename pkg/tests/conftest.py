import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gammahom.cell_problems import compute_correctors
from gammahom.coefficients import CellGrid, make_coefficient

settings.register_profile("ci", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line; printed again in the terminal summary."""
    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cos1d_256():
    A = make_coefficient("cos1d", CellGrid(1, 256))
    return A, compute_correctors(A)


@pytest.fixture(scope="session")
def fourier1d_512():
    A = make_coefficient("fourier", CellGrid(1, 512))
    return A, compute_correctors(A)


@pytest.fixture(scope="session")
def laminate_32():
    A = make_coefficient("laminate", CellGrid(2, 32))
    return A, compute_correctors(A)


@pytest.fixture(scope="session")
def fourier2d_32():
    A = make_coefficient("fourier", CellGrid(2, 32), angle=0.4, anisotropy=1.5)
    return A, compute_correctors(A)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
