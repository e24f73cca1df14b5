"""Shared fixtures: a coarse working grid fast enough for module tests.

The acceptance suite (test_acceptance.py) builds its own reference-scale
fixtures; everything else runs on this cheap grid.
"""

import numpy as np
import pytest

from nlslab import discretization as dz
from nlslab import linearized_spectrum as ls


@pytest.fixture(scope="session")
def grid():
    return dz.build_grid(6, 40.0, 800)


@pytest.fixture(scope="session")
def lapl(grid):
    return dz.build_laplacian(grid)


@pytest.fixture(scope="session")
def blocks(grid):
    return ls.build_blocks(grid)


@pytest.fixture(scope="session")
def pair(blocks):
    return ls.ground_mode(blocks)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
