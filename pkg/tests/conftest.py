import numpy as np
import pytest

from phasebook.numerics import RngStream


@pytest.fixture
def rng():
    return RngStream(123456, 0)


@pytest.fixture
def np_rng():
    return np.random.default_rng(987654)
