import pytest

from ctsim import Topology
from ffield import get_modulus


class FixedDraws:
    """Stands in for a numpy Generator, returning queued values from integers()"""

    def __init__(self, *values):
        self.values = list(values)

    def integers(self, low, high=None, size=None, dtype=None):
        return self.values.pop(0)


@pytest.fixture
def f7():
    return get_modulus(7)


@pytest.fixture
def f17():
    return get_modulus(17)


@pytest.fixture
def fixed_draws():
    return FixedDraws


def line_topology(n):
    return Topology(tuple(range(1, n + 1)), frozenset((i, i + 1) for i in range(1, n)))


def complete_topology(n):
    return Topology(
        tuple(range(1, n + 1)),
        frozenset((a, b) for a in range(1, n + 1) for b in range(a + 1, n + 1)),
    )


def star_topology(leaves):
    return Topology(tuple(range(1, leaves + 2)), frozenset((1, leaf) for leaf in range(2, leaves + 2)))
