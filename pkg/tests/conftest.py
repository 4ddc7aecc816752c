import numpy as np
import pytest

from impurity_vqdmft.model import MatsubaraGrid, SiamParams

# Iteration 9 of the exact-solver loop at U = 4, mu = -0.25 (n ~ 0.5), rounded.
REFERENCE = SiamParams.from_arrays(4.0, -0.25, [-0.1129, 0.4920], [0.3807, 0.6699])
# Particle-hole symmetric B = 2 instance with a degenerate ground doublet.
HALF_FILLED = SiamParams.from_arrays(4.0, 2.0, [-1.2, 1.2], [0.6, 0.6])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid():
    return MatsubaraGrid(beta=200.0, n_max=200)


def random_siam(rng, B, U=None, mu=None):
    U = rng.uniform(0, 6) if U is None else U
    mu = rng.uniform(-1, 4) if mu is None else mu
    return SiamParams.from_arrays(U, mu, rng.uniform(-2, 2, B), rng.uniform(-1, 1, B))


def random_state(rng, n):
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return psi / np.linalg.norm(psi)
