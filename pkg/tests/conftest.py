import numpy as np
import pytest
from hypothesis import settings

from fbsecrecy.dist import ExponentialMean

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def rayleigh():
    return ExponentialMean(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
