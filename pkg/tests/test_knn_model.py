import math

import pytest

from conftest import random_configuration
from geometry import Configuration, MarkedPoint, Window
from knn_model import (
    KnnModel,
    KnnSpec,
    RadialPotential,
    cone_axes,
    default_nd,
    estimate_nd,
    knn_influence_count,
    knn_neighbors,
)
from pair_model import PairModel, PairPotentialSpec


def soft(k=2, z=5.0, beta=0.5, dim=2):
    phi = RadialPotential.tabulated((0.0, 0.1, 0.3), (2.0, 1.0, 0.0))
    return KnnModel(KnnSpec(z=z, beta=beta, k=k, phi=phi), dim)


def test_ties_break_by_lexicographic_position(unit_square):
    config = Configuration(unit_square, points=[MarkedPoint((0.6, 0.5)), MarkedPoint((0.4, 0.5))])
    (first,) = knn_neighbors((0.5, 0.5), config, 1)
    assert config.point(first).pos == (0.4, 0.5)


def test_fewer_points_than_k(unit_square):
    config = Configuration(unit_square, points=[MarkedPoint((0.2, 0.2))])
    assert len(knn_neighbors((0.5, 0.5), config, 3)) == 1
    assert knn_neighbors((0.5, 0.5), Configuration(unit_square), 3) == []


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_local_energy_is_the_global_energy_difference(rng, dim, k):
    window = Window(side=1.0, dim=dim)
    model = soft(k=k, dim=dim)
    for _ in range(8):
        config = random_configuration(window, 30, rng)
        x = MarkedPoint(window.uniform(rng))
        expected = model.global_energy(config.with_point(x)) - model.global_energy(config)
        assert model.local_energy(x, config) == pytest.approx(expected, abs=1e-9)


def test_coulomb_energy_difference_in_three_dimensions(rng):
    window = Window(side=1.0, dim=3)
    model = KnnModel(KnnSpec(z=1.0, beta=0.1, k=2, phi=RadialPotential.coulomb()), 3)
    for _ in range(5):
        config = random_configuration(window, 25, rng)
        x = MarkedPoint(window.uniform(rng))
        expected = model.global_energy(config.with_point(x)) - model.global_energy(config)
        assert model.local_energy(x, config) == pytest.approx(expected, rel=1e-9)
    assert model.upper_stability(window) == 1.0


def test_coulomb_needs_three_dimensions():
    with pytest.raises(ValueError, match="d >= 3"):
        KnnModel(KnnSpec(z=1.0, beta=1.0, k=1, phi=RadialPotential.coulomb()), 2)


def test_influence_count_matches_brute_force(rng):
    window = Window(side=1.0, dim=2)
    config = random_configuration(window, 40, rng)
    for _ in range(10):
        x = MarkedPoint(window.uniform(rng))
        extended = config.with_point(x)
        new_id = next(pid for pid, p in extended.items() if p.pos == x.pos)
        brute = sum(1 for pid in extended.ids()
                    if pid != new_id and new_id in knn_neighbors(extended.point(pid), extended, 2, exclude=pid))
        assert knn_influence_count(x, config, 2) == brute


def test_cone_cover_and_default_nd():
    assert len(cone_axes(2)) == 16
    assert default_nd(2) == 16.0
    assert all(abs(float(a @ a) - 1.0) < 1e-12 for a in cone_axes(3))


def test_estimate_nd(rng):
    window = Window(side=1.0, dim=2)
    model = soft(k=1)
    samples = [random_configuration(window, 30, rng) for _ in range(3)]
    nd = estimate_nd(model, samples, 20, rng)
    assert 1.0 <= nd <= default_nd(2)
    with pytest.raises(ValueError):
        estimate_nd(model, samples, 0, rng)
    strauss = PairModel(PairPotentialSpec("strauss", z=1.0, beta=1.0, radius=0.1), 2)
    with pytest.raises(ValueError):
        estimate_nd(strauss, samples, 5, rng)


def test_upper_stability_for_bounded_potentials(unit_square):
    phi = RadialPotential.tabulated((0.0, 0.2), (-1.0, 0.5))
    model = KnnModel(KnnSpec(z=2.0, beta=0.5, k=2, phi=phi, n_d=3.0), 2)
    assert model.upper_stability(unit_square) == pytest.approx(2.0 * math.exp(0.5 * 7 * 2 * 1.0))
    custom = RadialPotential.custom(lambda r: math.exp(-r), bounded=True, sup=1.0)
    assert custom(0.0, 2) == 1.0
    with pytest.raises(ValueError):
        RadialPotential.custom(lambda r: r)


def test_section_round_trip():
    model = KnnModel.from_section({"kind": "knn", "z": 1.0, "k": 2, "r": [0.0, 0.2], "phi": [1.0, 0.0]}, 2)
    again = KnnModel.from_section(model.to_section(), 2)
    assert again.to_section() == model.to_section()
    with pytest.raises(ValueError):
        KnnModel.from_section({"kind": "knn", "z": 1.0, "potential": "custom"}, 2)
