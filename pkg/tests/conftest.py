import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from functional import ProblemParams  # noqa: E402
from profiles import constants_table  # noqa: E402
from radial_grid import RadialField, StatePair, build_radial_grid  # noqa: E402
from thresholds import admissible_beta  # noqa: E402


def gaussian_pair(grid, b1, b2, widths=(1.0, 0.7)):
    """Mass-normalized Gaussian pair with the Dirichlet node set to zero."""
    r = grid.nodes
    u = np.exp(-(r / widths[0]) ** 2) if b1 > 0 else np.zeros(grid.n)
    v = np.exp(-(r / widths[1]) ** 2) if b2 > 0 else np.zeros(grid.n)
    u[-1] = 0.0
    v[-1] = 0.0
    return StatePair(RadialField(grid, u), RadialField(grid, v), b1, b2).normalized()


@pytest.fixture
def grid3():
    return build_radial_grid(3, 10.0, 1024)


@pytest.fixture
def state3(grid3):
    return gaussian_pair(grid3, 0.5, 0.5)


@pytest.fixture(scope="session")
def constants():
    return constants_table()


@pytest.fixture
def params3(constants):
    """Three-dimensional parameters halfway into the two-solution window."""
    base = ProblemParams(N=3, mu1=1.0, mu2=1.0, rho=5.0, beta=1.0, b1=0.5, b2=0.5)
    return base.with_(beta=admissible_beta(base, constants, 0.5))


@pytest.fixture
def config_dir():
    return Path(__file__).resolve().parent.parent / "config"
