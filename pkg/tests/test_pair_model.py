import math

import pytest

from base_model import HardCoreConflict, SingularPotentialError
from conftest import random_configuration
from geometry import Configuration, MarkedPoint, Window
from pair_model import PairModel, PairPotentialSpec, effective_cutoff, pair_local_energy, phi_eval


def strauss(z=1.0, beta=1.0, radius=0.1, dim=2):
    return PairModel(PairPotentialSpec("strauss", z=z, beta=beta, radius=radius), dim)


def test_strauss_potential_includes_the_radius():
    spec = PairPotentialSpec("strauss", z=1.0, beta=1.0, radius=0.1)
    assert phi_eval(spec, 0.0) == 1.0
    assert phi_eval(spec, 0.1) == 1.0
    assert phi_eval(spec, 0.1000001) == 0.0


def test_hard_core_blocks_insertions(unit_square):
    model = PairModel(PairPotentialSpec("hard_core", z=2.0, beta=1.0, radius=0.1), 2)
    config = Configuration(unit_square, points=[MarkedPoint((0.5, 0.5))])
    assert model.papangelou(MarkedPoint((0.55, 0.5)), config) == 0.0
    assert model.papangelou(MarkedPoint((0.75, 0.5)), config) == 2.0


def test_singular_potentials_raise_at_zero():
    spec = PairPotentialSpec("riesz", z=1.0, beta=1.0, s=3.0)
    with pytest.raises(SingularPotentialError):
        phi_eval(spec, 0.0)
    assert phi_eval(spec, 2.0) == pytest.approx(2.0 ** -3)


def test_dimension_constraints():
    with pytest.raises(ValueError, match="s > d"):
        PairModel(PairPotentialSpec("riesz", z=1.0, beta=1.0, s=2.0), 2)
    with pytest.raises(ValueError):
        PairModel(PairPotentialSpec("lennard_jones", z=1.0, beta=1.0, A=1.0, B=1.0, a1=12, a2=2), 2)
    with pytest.raises(ValueError):
        PairPotentialSpec("lennard_jones", z=1.0, beta=1.0, A=1.0, B=1.0, a1=4, a2=6)


def test_riesz_cutoff_where_potential_is_negligible():
    spec = PairPotentialSpec("riesz", z=1.0, beta=1.0, s=4.0)
    assert effective_cutoff(spec) == pytest.approx(1e3)
    assert effective_cutoff(PairPotentialSpec("strauss", z=1.0, beta=1.0, radius=0.2, cutoff=0.1)) == 0.1


def test_tabulated_interpolates_and_vanishes_beyond_grid():
    spec = PairPotentialSpec("tabulated", z=1.0, beta=1.0, r_grid=(0.0, 0.1, 0.2), phi_grid=(2.0, 1.0, 0.0))
    assert phi_eval(spec, 0.05) == pytest.approx(1.5)
    assert phi_eval(spec, 0.5) == 0.0


def test_strauss_papangelou_counts_close_neighbours(unit_square):
    model = strauss(z=2.0, beta=0.5, radius=0.1)
    config = Configuration(unit_square, points=[
        MarkedPoint((0.5, 0.5)), MarkedPoint((0.55, 0.5)), MarkedPoint((0.9, 0.9)),
    ])
    x = MarkedPoint((0.52, 0.52))
    assert pair_local_energy(model.spec, x, config) == 2.0
    assert model.papangelou(x, config) == pytest.approx(2.0 * math.exp(-1.0))


def test_periodic_pairs_use_minimum_image(unit_square):
    model = strauss(radius=0.1)
    config = Configuration(unit_square, points=[MarkedPoint((0.98, 0.5))])
    assert model.local_energy(MarkedPoint((0.03, 0.5)), config) == 1.0


def test_ratio_is_exactly_the_pair_weight(unit_square, rng):
    model = strauss(beta=1.3, radius=0.1)
    config = random_configuration(unit_square, 30, rng)
    for _ in range(20):
        x = MarkedPoint(unit_square.uniform(rng))
        near = MarkedPoint(unit_square.wrap((x.pos[0] + 0.05, x.pos[1])))
        far = MarkedPoint(unit_square.wrap((x.pos[0] + 0.3, x.pos[1])))
        assert model.papangelou_ratio(x, config, near) == math.exp(-1.3)
        assert model.papangelou_ratio(x, config, far) == 1.0


def test_ratio_undefined_when_intensity_vanishes(unit_square):
    model = PairModel(PairPotentialSpec("hard_core", z=1.0, beta=1.0, radius=0.1), 2)
    config = Configuration(unit_square, points=[MarkedPoint((0.5, 0.5))])
    with pytest.raises(HardCoreConflict):
        model.papangelou_ratio(MarkedPoint((0.52, 0.5)), config, MarkedPoint((0.8, 0.8)))


@pytest.mark.parametrize("spec", [
    PairPotentialSpec("strauss", z=1.0, beta=0.7, radius=0.15),
    PairPotentialSpec("lennard_jones", z=1.0, beta=0.2, A=1e-4, B=1e-3, a1=6.0, a2=3.0, cutoff=0.4),
    PairPotentialSpec("tabulated", z=1.0, beta=1.0, r_grid=(0.0, 0.1, 0.3), phi_grid=(1.0, 0.5, -0.2)),
])
def test_local_energy_is_the_global_energy_difference(spec, rng):
    window = Window(side=2.0, dim=2)
    model = PairModel(spec, 2)
    for _ in range(10):
        config = random_configuration(window, 25, rng, cell_size=model.grid_cell_size(window))
        x = MarkedPoint(window.uniform(rng))
        expected = model.global_energy(config.with_point(x)) - model.global_energy(config)
        assert model.local_energy(x, config) == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_upper_stability_only_for_nonnegative_potentials(unit_square):
    assert strauss(z=3.0).upper_stability(unit_square) == 3.0
    lj = PairModel(PairPotentialSpec("lennard_jones", z=1.0, beta=1.0, A=1.0, B=1.0, a1=12, a2=6), 2)
    assert lj.upper_stability(unit_square) is None


def test_section_round_trip():
    model = PairModel.from_section({"kind": "strauss", "z": 2.0, "beta": 0.5, "radius": 0.1}, 2)
    again = PairModel.from_section(model.to_section(), 2)
    assert again.to_section() == model.to_section()
    assert again.phi(0.05) == 1.0
