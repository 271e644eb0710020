import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nlslab.spectral import GridSpec

settings.register_profile(
    "nlslab", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("nlslab")

SOLITON_BOX = 40.0 * math.pi


@pytest.fixture
def small_grid():
    return GridSpec(64, 2.0 * math.pi)


@pytest.fixture
def soliton_grid():
    return GridSpec(1024, SOLITON_BOX)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
