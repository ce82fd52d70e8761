import numpy as np
import pytest

from partialstab.fields import zero_potential
from partialstab.geometry import unit_cube


@pytest.fixture(scope="session")
def cube8():
    return unit_cube(1 / 8)


@pytest.fixture(scope="session")
def cube16():
    return unit_cube(1 / 16)


@pytest.fixture(scope="session")
def zero8(cube8):
    return zero_potential(cube8, s=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
