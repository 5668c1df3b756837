import numpy as np
import pytest

from hocbiharm.grid import UniformGrid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit2():
    return lambda n: UniformGrid.unit(2, n)


@pytest.fixture
def unit3():
    return lambda n: UniformGrid.unit(3, n)
