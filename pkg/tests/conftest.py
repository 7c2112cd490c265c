import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from phi4lab.lattice import Lattice

settings.register_profile(
    "phi4", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("phi4")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical checks")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def lat4():
    return Lattice(2, 1.0)


@pytest.fixture
def lat8():
    return Lattice(3, 1.0)
