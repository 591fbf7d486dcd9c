import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def rand_coeffs(gen, n, batch=(), scale=1.0):
    shape = batch + (n,)
    return scale * (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)) / np.arange(1, n + 1)
