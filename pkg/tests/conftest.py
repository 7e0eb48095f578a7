import numpy as np
import pytest

from ghostsim import EnsembleConfig, Grid1D, SetupGeometry


@pytest.fixture(scope="session")
def grid():
    return Grid1D(n=16384, dx=2e-6)


@pytest.fixture(scope="session")
def geometry():
    """Bench geometry with the verbatim scan-plane distance."""
    return SetupGeometry.default()


@pytest.fixture(scope="session")
def small_grid():
    return Grid1D(n=2048, dx=8e-6)


def make_config(grid, geometry, n_realizations=1000, seed=1234):
    return EnsembleConfig(
        n_realizations=n_realizations, seed=seed, geometry=geometry, grid=grid
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(42)
