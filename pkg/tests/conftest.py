import numpy as np
import pytest

from gbsde import core

REF_SEED = 20240


@pytest.fixture(scope="session")
def grid50():
    return core.make_time_grid(1.0, 50)


@pytest.fixture(scope="session")
def ens_small(grid50):
    """Cheap ensemble for unit tests."""
    return core.simulate_ensemble(grid50, 1, 4000, 123, antithetic=True)


@pytest.fixture(scope="session")
def ref_ens(grid50):
    """Reference ensemble: T=1, N=50, M=2e5, antithetic, fixed seed.

    Session-scoped because generation costs a few seconds; every consumer
    treats it as read-only.
    """
    return core.simulate_ensemble(grid50, 1, 200_000, REF_SEED,
                                  antithetic=True)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(987)
