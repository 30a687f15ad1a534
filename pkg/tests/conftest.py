import numpy as np
import pytest

from cedetect.games import (
    VictimView,
    build_chicken_game,
    chicken_ce,
    victim_view,
)
from cedetect.tilting import TiltedFamily


@pytest.fixture(scope="session")
def chicken():
    return build_chicken_game()


@pytest.fixture(scope="session")
def ce():
    return chicken_ce()


@pytest.fixture(scope="session")
def chicken_view(chicken, ce):
    return victim_view(chicken, ce, 0)


@pytest.fixture(scope="session")
def chicken_family(chicken_view):
    return TiltedFamily(chicken_view)


def make_family(alphabet, pmf) -> TiltedFamily:
    """A tilted family straight from an alphabet/pmf pair (no game needed)."""
    alphabet = np.asarray(alphabet, dtype=float)
    groups = tuple(((int(i),),) for i in range(alphabet.size))
    return TiltedFamily(VictimView(0, alphabet, np.asarray(pmf, dtype=float), groups))


@pytest.fixture(scope="session")
def binary_family():
    return make_family([1.0, 3.0], [0.3, 0.7])
