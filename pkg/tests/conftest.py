import numpy as np
import pytest

from lqric import fixtures
from lqric.system import StateSpaceSystem

SQRT2 = np.sqrt(2.0)


@pytest.fixture
def hidden_pole():
    return fixtures.hidden_pole_system()


@pytest.fixture
def scalar_plant():
    return fixtures.scalar_unstable()


@pytest.fixture
def state_only():
    return fixtures.scalar_state_only()


@pytest.fixture
def rng():
    return fixtures.rng()


def scalar(a, b, c, d):
    return StateSpaceSystem([[a]], [[b]], [[c]], [[d]])
