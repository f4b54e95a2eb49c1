import numpy as np
import pytest

from uotpair import DiscreteMeasure, density_to_grid, SyntheticDensity, SolverConfig


def dirac(x, mass, dim=None):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return DiscreteMeasure(x.reshape(1, -1), np.array([float(mass)]))


def random_measure(rng, n, dim=1, mass=None):
    pts = rng.random((n, dim))
    w = rng.uniform(0.2, 1.0, n)
    if mass is not None:
        w *= mass / w.sum()
    return DiscreteMeasure(pts, w)


@pytest.fixture
def rng():
    return np.random.default_rng(20260)


@pytest.fixture(scope="session")
def uniform_grids_32():
    u = SyntheticDensity.uniform(1)
    return density_to_grid(u, 1.0, 32), density_to_grid(u, 2.5, 32)


@pytest.fixture(scope="session")
def default_solver():
    return SolverConfig()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
