import math

import pytest
from scipy.special import gamma as _gamma

import impulsive_duffing as idf


def reference_period(n: int) -> float:
    """Closed-form minimal period of X'' + X^(2n+1) = 0 through (1, 0).

    Independent oracle: quarter period = sqrt(n+1) * B(1/(2n+2), 1/2) / (2n+2)
    via the Beta function.
    """
    m = 2 * n + 2
    beta = _gamma(1.0 / m) * _gamma(0.5) / _gamma(1.0 / m + 0.5)
    return 2.0 * beta / math.sqrt(n + 1.0)


@pytest.fixture(scope="session")
def chart1():
    return idf.compute_reference(1, cache=None)


@pytest.fixture(scope="session")
def chart2():
    return idf.compute_reference(2, cache=None)


@pytest.fixture(scope="session")
def basic_scenario():
    return idf.load_scenario("poly-kick-basic")


@pytest.fixture(scope="session")
def basic_map(basic_scenario):
    return idf.build_map(basic_scenario)


@pytest.fixture(scope="session")
def unforced_scenario():
    return idf.load_scenario("unforced-cubic")


@pytest.fixture(scope="session")
def unforced_map(unforced_scenario):
    return idf.build_map(unforced_scenario)


@pytest.fixture(scope="session")
def tangent_system():
    return idf.build_system(idf.load_scenario("kicked-tangent"))
