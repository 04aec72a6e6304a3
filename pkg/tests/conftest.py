from pathlib import Path

import numpy as np
import pytest

from roughcal import PriorBox, SurfaceGrid, init_network
from roughcal.surrogate import SurfaceSurrogate

ARTIFACTS = Path(__file__).resolve().parents[1] / "artifacts"


@pytest.fixture(scope="session")
def prior():
    return PriorBox()


@pytest.fixture(scope="session")
def grid():
    return SurfaceGrid()


@pytest.fixture(scope="session")
def random_surrogate(prior, grid):
    """Untrained (random-weight) surrogate; enough for exactness/identity
    tests that do not depend on fit quality."""
    net = init_network([4, 30, 30, 30, 30, grid.size], seed=123)
    return SurfaceSurrogate(net=net, prior=prior, grid=grid)


@pytest.fixture(scope="session")
def trained_surrogate():
    path = ARTIFACTS / "surrogate.json"
    if not path.exists():
        pytest.skip("trained surrogate artifact missing; run scripts/make_artifacts.py")
    return SurfaceSurrogate.load(path)
