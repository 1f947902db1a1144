import numpy as np
import pytest

from mjpgibbs.core import Generator, InitialDistribution


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def three_state():
    # leave rates 1.5, 1.3, 2.0
    return Generator([[0.0, 1.0, 0.5], [0.3, 0.0, 1.0], [1.0, 1.0, 0.0]])


@pytest.fixture
def two_state():
    return Generator([[0.0, 2.0], [3.0, 0.0]])
