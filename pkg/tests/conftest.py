import numpy as np
import pytest

import uncertain_markov as um
from uncertain_markov.statespace import site_sum


def contact(graph, lambdas):
    return um.contact_speed(graph, um.ControlGrid.from_values(lambdas, "lambda"))


def two_state(a, b):
    """Single site flipping 0->1 at rate a and 1->0 at rate b."""
    return um.tabular_speed([[[a, b]]])


def two_state_expm(a, b, t):
    """Closed form of exp(tQ) for Q = [[-a, a], [b, -b]]."""
    s = a + b
    e = np.exp(-s * t)
    return np.array([[b + a * e, a - a * e], [b - b * e, a + b * e]]) / s


@pytest.fixture
def path3_contact():
    return contact(um.SiteGraph.path(3), [0.1, 0.4])


@pytest.fixture
def pair_contact():
    return contact(um.SiteGraph.complete(2), [0.1, 0.4])


@pytest.fixture
def pair_ising():
    return um.ising_speed(um.SiteGraph.path(2), um.ControlGrid.from_values([0.2, 0.5], "beta"))


@pytest.fixture
def sum3():
    return site_sum(3)
