import math

import numpy as np
import pytest
from scipy.stats import chisquare

from estimators import pair_distance_histogram
from geometry import Boundary, Window, ball_volume
from orchestrator import _merge_bins
from pair_model import PairModel, PairPotentialSpec
from papangelou import build_model
from sampler import (
    ChainState,
    SamplerSchedule,
    TruncationError,
    bdm_step,
    brute_force_oracle,
    make_rng,
    run_chains,
    sample_chain,
    sample_poisson,
    uniform_tuples,
)


def all_pairs_strauss(z=2.0, beta=0.7):
    # on the unit circle every pair is within 0.5, so H = n(n-1)/2
    return PairModel(PairPotentialSpec("strauss", z=z, beta=beta, radius=0.5), 1)


def exact_all_pairs_law(z, beta, n_max):
    terms = np.array([z ** n / math.factorial(n) * math.exp(-beta * n * (n - 1) / 2) for n in range(n_max + 1)])
    return terms / terms.sum()


def test_streams_are_reproducible_and_distinct():
    a = make_rng(7, 0).random(5)
    assert np.array_equal(a, make_rng(7, 0).random(5))
    assert not np.array_equal(a, make_rng(7, 1).random(5))
    assert not np.array_equal(a, make_rng(8, 0).random(5))


def test_schedule_validation():
    with pytest.raises(ValueError, match="sum to 1"):
        SamplerSchedule(p_birth=0.5, p_death=0.4, p_move=0.2)
    with pytest.raises(ValueError):
        SamplerSchedule(p_birth=0.0, p_death=0.8, p_move=0.2)
    with pytest.raises(ValueError):
        SamplerSchedule(thin=-1)
    with pytest.raises(ValueError):
        SamplerSchedule(move_sigma=0.0)


def test_schedule_defaults_scale_with_expected_count():
    window = Window(side=2.0, dim=2)
    model = PairModel(PairPotentialSpec("strauss", z=3.0, beta=1.0, radius=0.1), 2)
    resolved = SamplerSchedule().resolved(model, window)
    assert resolved.burn_in == 100_000 * 12
    assert resolved.thin == 12
    assert resolved.move_sigma == pytest.approx(0.05)
    kept = SamplerSchedule(burn_in=10, thin=3, move_sigma=0.2).resolved(model, window)
    assert (kept.burn_in, kept.thin, kept.move_sigma) == (10, 3, 0.2)


def test_poisson_sampler_mean_count(unit_square):
    counts = [len(sample_poisson(unit_square, 30.0, None, make_rng(3, i))) for i in range(400)]
    assert np.mean(counts) == pytest.approx(30.0, abs=5 * math.sqrt(30.0 / 400))
    with pytest.raises(ValueError):
        sample_poisson(unit_square, 0.0, None, make_rng(3, 0))


def test_steps_keep_the_index_consistent(unit_square):
    model = PairModel(PairPotentialSpec("strauss", z=40.0, beta=0.5, radius=0.08), 2)
    schedule = SamplerSchedule(burn_in=0, thin=1).resolved(model, unit_square)
    state = ChainState(config=model.new_configuration(unit_square), rng=make_rng(11, 0))
    for _ in range(3000):
        bdm_step(state, model, schedule)
    assert state.config.index_snapshot() == state.config.rebuilt_index()
    assert all(unit_square.contains(p.pos) for p in state.config)
    assert sum(state.proposed.values()) == 3000
    assert all(state.accepted[k] <= state.proposed[k] for k in state.proposed)


def test_chains_are_deterministic(unit_square):
    model = build_model({"kind": "strauss", "z": 20.0, "beta": 1.0, "radius": 0.05}, 2)
    schedule = SamplerSchedule(burn_in=500, thin=10)
    first = sample_chain(model, unit_square, schedule, 20, seed=5)
    second = sample_chain(model, unit_square, schedule, 20, seed=5)
    assert first.snapshots == second.snapshots
    assert [c.positions() for c in first.snapshots] == [c.positions() for c in second.snapshots]
    other = sample_chain(model, unit_square, schedule, 20, seed=5, chain_index=1)
    assert other.snapshots != first.snapshots
    assert first.steps == 500 + 20 * 10


def test_hard_core_is_never_violated(unit_square):
    model = PairModel(PairPotentialSpec("hard_core", z=60.0, beta=1.0, radius=0.1), 2)
    run = sample_chain(model, unit_square, SamplerSchedule(burn_in=2000, thin=50), 30, seed=2)
    for config in run.snapshots:
        for pid, p in config.items():
            assert config.nearest_distance(p.pos, exclude=pid) > 0.1
    assert run.acceptance["birth"]["proposed"] > 0


def test_oracle_is_exact_when_every_pair_interacts():
    window = Window(side=1.0, dim=1)
    result = brute_force_oracle(all_pairs_strauss(), window, n_max=8, mc_samples=1000, truncation_tol=1e-3)
    assert result.probabilities == pytest.approx(exact_all_pairs_law(2.0, 0.7, 8), abs=1e-12)
    assert result.probabilities.sum() == pytest.approx(1.0)
    assert result.tail_mass <= 1e-3
    assert result.partition_se == pytest.approx(np.zeros(9), abs=1e-9)


def test_oracle_without_interaction_is_poisson():
    window = Window(side=1.0, dim=2)
    model = build_model({"kind": "poisson", "z": 1.0}, 2)
    result = brute_force_oracle(model, window, n_max=9, mc_samples=100, truncation_tol=1e-6)
    law = np.array([1.0 / math.factorial(n) for n in range(10)])
    assert result.probabilities == pytest.approx(law / law.sum(), rel=1e-12)
    assert not result.probability_se.any()


def test_second_partition_term_on_the_free_unit_square():
    # P(|U - V| <= r) for two uniform points in the unit square, r <= 1
    r = 0.5
    close = math.pi * r ** 2 - 8 / 3 * r ** 3 + r ** 4 / 2
    exact = 0.5 * (1 - close * -math.expm1(-1.0))
    model = build_model({"kind": "strauss", "z": 1.0, "beta": 1.0, "radius": r}, 2)
    window = Window(side=1.0, dim=2, boundary=Boundary.FREE)
    result = brute_force_oracle(model, window, n_max=4, mc_samples=200_000, truncation_tol=1e-2, seed=5)
    assert result.partition_terms[2] == pytest.approx(exact, abs=4 * result.partition_se[2])
    assert result.partition_se[2] < 1e-3
    assert result.partition_terms[1] == 1.0


def test_second_partition_term_on_the_torus():
    window = Window(side=1.0, dim=2)
    model = build_model({"kind": "strauss", "z": 1.0, "beta": 2.0, "radius": 0.5}, 2)
    mean_weight = 1 + ball_volume(2, 0.5) * math.expm1(-2.0)
    result = brute_force_oracle(model, window, n_max=5, mc_samples=400_000, truncation_tol=1e-3, seed=1)
    assert result.partition_terms[2] == pytest.approx(mean_weight / 2, abs=4 * result.partition_se[2])
    assert result.partition_terms[2] == pytest.approx(mean_weight / 2, rel=1e-2)


def test_oracle_is_reproducible_per_seed():
    window = Window(side=1.0, dim=2)
    model = build_model({"kind": "strauss", "z": 1.0, "beta": 2.0, "radius": 0.5}, 2)
    first = brute_force_oracle(model, window, n_max=5, mc_samples=5000, truncation_tol=1e-3, seed=3)
    again = brute_force_oracle(model, window, n_max=5, mc_samples=5000, truncation_tol=1e-3, seed=3)
    other = brute_force_oracle(model, window, n_max=5, mc_samples=5000, truncation_tol=1e-3, seed=4)
    assert np.array_equal(first.partition_terms, again.partition_terms)
    assert not np.array_equal(first.partition_terms, other.partition_terms)
    assert np.all(first.probability_se[1:] > 0)


def test_generic_models_use_the_global_energy():
    window = Window(side=4.0, dim=1)
    model = build_model({"kind": "widom_rowlinson", "z": 0.5, "beta": 0.5, "radius": 0.5}, 1)
    result = brute_force_oracle(model, window, n_max=6, mc_samples=2000, truncation_tol=1e-2, seed=2)
    # a lone ball covers |B| = 1, two balls never cover more than 2
    assert result.partition_terms[1] == pytest.approx(2.0 * math.exp(-0.5))
    assert math.exp(-1.0) * 2.0 <= result.partition_terms[2] <= math.exp(-0.5) * 2.0
    assert result.probabilities.sum() == pytest.approx(1.0)


def test_oracle_pair_histogram_when_every_pair_interacts():
    window = Window(side=1.0, dim=1)
    edges = np.linspace(0.0, 0.5, 5)
    result = brute_force_oracle(all_pairs_strauss(), window, n_max=8, mc_samples=20_000, truncation_tol=1e-3,
                                distance_edges=edges)
    law = exact_all_pairs_law(2.0, 0.7, 8)
    n = np.arange(9)
    # pair distances on the circle are uniform on [0, 1/2] whatever N is
    expected = float(law @ (n * (n - 1) / 2)) / 4
    assert result.pair_histogram == pytest.approx(np.full(4, expected), abs=float(4 * result.pair_histogram_se.max()))
    assert np.all(result.pair_histogram_se > 0)
    assert result.to_dict()["distance_edges"] == edges.tolist()


def test_oracle_truncation_and_argument_errors():
    window = Window(side=1.0, dim=1)
    with pytest.raises(TruncationError):
        brute_force_oracle(all_pairs_strauss(), window, n_max=2)
    with pytest.raises(ValueError, match="mc_samples"):
        brute_force_oracle(all_pairs_strauss(), window, n_max=8, mc_samples=1, truncation_tol=1e-3)
    with pytest.raises(ValueError, match="distance_edges"):
        brute_force_oracle(all_pairs_strauss(), window, n_max=8, truncation_tol=1e-3, distance_edges=[0.5, 0.1])
    lj = PairModel(PairPotentialSpec("lennard_jones", z=1.0, beta=1.0, A=1.0, B=1.0, a1=12, a2=6), 1)
    with pytest.raises(ValueError, match="locally stable"):
        brute_force_oracle(lj, Window(side=4.0, dim=1), n_max=3)


def test_uniform_tuples_fill_the_window():
    positions = uniform_tuples(Window(side=2.0, dim=2), 100, 3, make_rng(0, 0))
    assert positions.shape == (100, 3, 2)
    assert positions.min() >= 0.0 and positions.max() < 2.0


def chain_count_law(runs, n_max):
    counts = [min(len(c), n_max) for run in runs for c in run.snapshots]
    return np.bincount(counts, minlength=n_max + 1).astype(float)


def chi_square_p_value(observed, probabilities):
    observed, expected = _merge_bins(observed, probabilities * observed.sum(), 5.0)
    return chisquare(observed, expected * observed.sum() / expected.sum()).pvalue


@pytest.mark.slow
def test_strauss_chain_matches_the_oracle_in_two_dimensions():
    window = Window(side=1.0, dim=2)
    model = build_model({"kind": "strauss", "z": 1.0, "beta": 2.0, "radius": 0.5}, 2)
    edges = np.linspace(0.0, window.max_distance, 5)
    oracle = brute_force_oracle(model, window, n_max=5, mc_samples=1_000_000, truncation_tol=1e-3, seed=11,
                                distance_edges=edges)
    runs = run_chains(model, window, SamplerSchedule(burn_in=5000, thin=40), 25_000, seed=13,
                      n_chains=4, threads=4)

    assert chi_square_p_value(chain_count_law(runs, 5), oracle.probabilities) >= 0.01

    samples = [c for run in runs for c in run.snapshots]
    histogram = pair_distance_histogram(samples, edges)
    for mean, se, target, target_se in zip(histogram.mean, histogram.se,
                                           oracle.pair_histogram, oracle.pair_histogram_se):
        assert abs(mean - target) <= 4 * math.hypot(se, target_se)


@pytest.mark.slow
def test_chain_without_interaction_is_poisson():
    window = Window(side=1.0, dim=2)
    model = build_model({"kind": "poisson", "z": 1.0}, 2)
    oracle = brute_force_oracle(model, window, n_max=8, truncation_tol=1e-5)
    runs = run_chains(model, window, SamplerSchedule(burn_in=2000, thin=20), 20_000, seed=23)
    assert chi_square_p_value(chain_count_law(runs, 8), oracle.probabilities) >= 0.01


@pytest.mark.slow
def test_all_pairs_chain_matches_the_oracle():
    window = Window(side=1.0, dim=1)
    model = all_pairs_strauss()
    oracle = brute_force_oracle(model, window, n_max=8, mc_samples=1000, truncation_tol=1e-3)
    run = sample_chain(model, window, SamplerSchedule(burn_in=2000, thin=20), 20_000, seed=17)
    assert chi_square_p_value(chain_count_law([run], 8), oracle.probabilities) >= 0.01
