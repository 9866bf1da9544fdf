import numpy as np
import pytest

from aerostruct.cases import desk_wing


@pytest.fixture(scope="session")
def small_case():
    """Coarse flexible wing: fast enough for coupled checks in unit tests."""
    return desk_wing(nc=4, ns=6, n_beam=7)


@pytest.fixture(scope="session")
def desk_case():
    return desk_wing()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
