import itertools

import pytest

from geometry import Boundary, Configuration, MarkedPoint, Window
from sampler import make_rng, sample_poisson


@pytest.fixture
def rng():
    return make_rng(20240601, 0)


@pytest.fixture
def unit_square():
    return Window(side=1.0, dim=2)


@pytest.fixture
def free_square():
    return Window(side=1.0, dim=2, boundary=Boundary.FREE)


def random_configuration(window, n, rng, cell_size=None, marks=None):
    """n distinct uniform points; marks is an optional callable rng -> mark."""
    config = Configuration(window, cell_size=cell_size)
    while len(config) < n:
        pos = window.uniform(rng)
        if not config.has_position(pos):
            config.insert(MarkedPoint(pos, marks(rng) if marks else None))
    return config


def lattice_configuration(window, per_axis):
    """per_axis^d points at the centres of a regular grid."""
    step = window.side / per_axis
    config = Configuration(window)
    for idx in itertools.product(range(per_axis), repeat=window.dim):
        config.insert(MarkedPoint(tuple((i + 0.5) * step for i in idx)))
    return config


def brute_neighbors(config, x, r):
    return sorted(pid for pid, p in config.items() if config.window.distance(x, p.pos) <= r)


def poisson_samples(window, z, n, seed):
    return [sample_poisson(window, z, None, make_rng(seed, i)) for i in range(n)]
