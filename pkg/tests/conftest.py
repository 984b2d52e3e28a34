import numpy as np
import pytest

from trackbench.models import VehicleParams
from trackbench.track import racetrack


@pytest.fixture
def params():
    return VehicleParams()


@pytest.fixture(scope="session")
def bench_track():
    # pinned benchmark racetrack: two 100 m straights + two R=20 m arcs
    return racetrack(100.0, 20.0, v_ref=8.0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
