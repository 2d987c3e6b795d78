import numpy as np
import pytest

from geoequiv.models import broken_pair, const2, flat_pair, proportional_pair, trig2, trig3


@pytest.fixture(scope="session")
def m2():
    return trig2()


@pytest.fixture(scope="session")
def m3():
    return trig3()


@pytest.fixture(scope="session")
def mc():
    return const2()


@pytest.fixture(scope="session")
def flat():
    return flat_pair()


@pytest.fixture(scope="session")
def broken(m2):
    return broken_pair(m2)


@pytest.fixture(scope="session")
def prop(m2):
    return proportional_pair(m2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
