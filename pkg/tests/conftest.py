import math

import pytest

from exact.state_space import StateSpace
from generators.models import build_spec


@pytest.fixture
def single_state():
    """d = 1, n = 0 with A_1: the only state off the pattern is the empty site."""
    return build_spec("ssep", 1, 0, 0.5, "A1")


@pytest.fixture
def four_state():
    """d = 1, n = 1 with A_1 at ρ = 1/2."""
    return build_spec("ssep", 1, 1, 0.5, "A1")


@pytest.fixture
def four_state_space(four_state):
    return StateSpace(four_state)


@pytest.fixture
def square_a1():
    return build_spec("ssep", 2, 1, 0.5, "A1")


@pytest.fixture
def beta_bond():
    def make(beta, rho=0.5):
        return build_spec("beta-bond", 2, 1, rho, "A2", beta=beta)

    return make


@pytest.fixture
def birth_death():
    return build_spec("birth-death", 1, 2, 0.5, a=1.0, b=1.0)


@pytest.fixture
def four_state_lambda():
    return 3.0 - math.sqrt(5.0)
