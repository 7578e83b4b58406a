import numpy as np
import pytest

from jumplab import StableKernel, assemble_generator, build_conductances, build_lattice


@pytest.fixture(scope="session")
def stable():
    return StableKernel(0.5, 1.0, 1)


@pytest.fixture(scope="session")
def small_chain(stable):
    """Conservative chain on [-1, 1] with n = 16 (33 sites)."""
    lat = build_lattice(1, 16, [(-1.0, 1.0)])
    return assemble_generator(build_conductances(stable, lat), "conservative")


@pytest.fixture(scope="session")
def small_killed(stable):
    lat = build_lattice(1, 16, [(-1.0, 1.0)])
    return assemble_generator(build_conductances(stable, lat), "killed")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
