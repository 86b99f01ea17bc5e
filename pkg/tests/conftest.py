import numpy as np
import pytest

from koopsym import get_system, linearize


@pytest.fixture(scope="session")
def vdp():
    return get_system("vdp-reverse", mu=0.5)


@pytest.fixture(scope="session")
def vdp_spec(vdp):
    return linearize(vdp)


@pytest.fixture(scope="session")
def resonant():
    return get_system("resonant-quadratic")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hurwitz(rng, n=3):
    """Diagonalizable Hurwitz matrix with well separated real eigenvalues."""
    lam = -rng.uniform(0.5, 2.0, size=n)
    lam.sort()
    while np.min(np.diff(lam)) < 0.2:
        lam = np.sort(-rng.uniform(0.5, 2.0, size=n))
    V = rng.standard_normal((n, n)) + 2 * np.eye(n)
    return V @ np.diag(lam) @ np.linalg.inv(V)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record and print one PASS/FAIL line per acceptance criterion."""
    def record(n, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {n}: {detail}"
        print(line)
        _CRITERIA[n] = line
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
