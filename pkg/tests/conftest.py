import numpy as np
import pytest

from fockhankel.kernel import make_kernel
from fockhankel.weights import EXP, GAUSSIAN, POWER2


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fock1():
    return make_kernel(GAUSSIAN, 1)


@pytest.fixture(scope="session")
def fock2():
    return make_kernel(GAUSSIAN, 2)


@pytest.fixture(scope="session")
def p2_1():
    return make_kernel(POWER2, 1)


@pytest.fixture(scope="session")
def exp1():
    return make_kernel(EXP, 1)
