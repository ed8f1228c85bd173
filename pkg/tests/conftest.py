import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "fwdwick", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("fwdwick")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_grid():
    from fwdwick.noise_grid import make_grid

    return make_grid(-2.0, 1.5, 28)
