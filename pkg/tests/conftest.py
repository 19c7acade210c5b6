"""Shared fixtures: expensive objects (profiles, kernel vectors, coefficient
caches) are built once per session and shared read-only."""

import numpy as np
import pytest

from epsoliton.grid import default_grid, default_weights
from epsoliton import profile as prof


@pytest.fixture(scope="session")
def grid10():
    return default_grid(0.1)


@pytest.fixture(scope="session")
def p10(grid10):
    return prof.profile_from_eps(0.1, 1.0, grid10)


@pytest.fixture(scope="session")
def w10(p10):
    return default_weights(p10.eps, p10.grid)


@pytest.fixture(scope="session")
def kv10(p10):
    from epsoliton import modulation
    return modulation.kernel_vectors(p10)


@pytest.fixture(scope="session")
def lin10(p10, kv10):
    from epsoliton.linearized import LinearContext
    return LinearContext.build(p10, kv10)


@pytest.fixture(scope="session")
def cache10(p10):
    from epsoliton.evans import CoefficientCache
    return CoefficientCache(p10)


@pytest.fixture(scope="session")
def grid05():
    return default_grid(0.05)


@pytest.fixture(scope="session")
def p05(grid05):
    return prof.profile_from_eps(0.05, 1.0, grid05)


@pytest.fixture(scope="session")
def w05(p05):
    return default_weights(p05.eps, p05.grid)


@pytest.fixture(scope="session")
def kv05(p05):
    from epsoliton import modulation
    return modulation.kernel_vectors(p05)


@pytest.fixture(scope="session")
def lin05(p05, kv05):
    from epsoliton.linearized import LinearContext
    return LinearContext.build(p05, kv05)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(7)
