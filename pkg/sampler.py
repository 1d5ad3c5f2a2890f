"""Sampler — birth-death-move Metropolis–Hastings for finite-volume Gibbs models.

Targets the density proportional to z^n exp(-beta H(gamma)) relative to the
unit-rate Poisson process on the window. Every acceptance probability is
expressed through lambda*, so each model only supplies its local energy.

Usage:
    from sampler import SamplerSchedule, run_chains

    schedule = SamplerSchedule(burn_in=10_000, thin=20)
    runs = run_chains(model, window, schedule, n_samples=500, seed=7, n_chains=4, threads=4)
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import poisson

from geometry import Configuration, MarkedPoint, tuple_pair_distances
from pair_model import PairModel

logger = logging.getLogger("Sampler")

MOVE_KINDS = ("birth", "death", "move")
BURN_IN_PER_POINT = 100_000
PROGRESS_CHUNKS = 4
ORACLE_CHUNK = 50_000
ORACLE_STREAM = 1 << 22


class TruncationError(ArithmeticError):
    """P(N > n_max) under the dominating Poisson exceeds the tolerance."""


def make_rng(seed, stream=0):
    """Counter-based Philox generator for (seed, stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))


# ── Schedule and state ─────────────────────────────────────────────

@dataclass(frozen=True)
class SamplerSchedule:
    p_birth: float = 0.4
    p_death: float = 0.4
    p_move: float = 0.2
    move_sigma: float | None = None
    burn_in: int | None = None
    thin: int | None = None

    def __post_init__(self):
        probs = (self.p_birth, self.p_death, self.p_move)
        if any(not 0 <= p < 1 for p in probs) or self.p_birth <= 0 or self.p_death <= 0:
            raise ValueError(f"Proposal probabilities must lie in [0, 1) with p_birth, p_death > 0, got {probs}")
        if not math.isclose(sum(probs), 1.0, abs_tol=1e-12):
            raise ValueError(f"Proposal probabilities must sum to 1, got {sum(probs)}")
        if self.move_sigma is not None and not self.move_sigma > 0:
            raise ValueError(f"move_sigma must be > 0, got {self.move_sigma}")
        for name in ("burn_in", "thin"):
            value = getattr(self, name)
            if value is not None and (int(value) != value or value < 0):
                raise ValueError(f"{name} must be a non-negative integer, got {value}")

    def resolved(self, model, window):
        """Fill unset fields with the defaults for this model and window."""
        expected = model.z * window.volume
        sigma = self.move_sigma
        if sigma is None:
            cutoff = model.interaction_cutoff(window)
            if cutoff is None or not cutoff > 0:
                cutoff = model.typical_spacing()
            sigma = min(cutoff, window.side) / 2
        burn_in = self.burn_in if self.burn_in is not None else int(BURN_IN_PER_POINT * max(1.0, expected))
        thin = self.thin if self.thin is not None else int(math.ceil(expected))
        return replace(self, move_sigma=float(sigma), burn_in=int(burn_in), thin=int(thin))

    def to_dict(self):
        return {
            "p_birth": self.p_birth,
            "p_death": self.p_death,
            "p_move": self.p_move,
            "move_sigma": self.move_sigma,
            "burn_in": self.burn_in,
            "thin": self.thin,
        }


@dataclass
class ChainState:
    config: object
    rng: np.random.Generator
    step: int = 0
    proposed: dict = field(default_factory=lambda: dict.fromkeys(MOVE_KINDS, 0))
    accepted: dict = field(default_factory=lambda: dict.fromkeys(MOVE_KINDS, 0))

    def acceptance(self):
        return {
            kind: {
                "proposed": self.proposed[kind],
                "accepted": self.accepted[kind],
                "rate": self.accepted[kind] / self.proposed[kind] if self.proposed[kind] else None,
            }
            for kind in MOVE_KINDS
        }


@dataclass
class ChainRun:
    snapshots: list
    acceptance: dict
    seed: int
    chain_index: int
    steps: int


# ── Poisson sampler ────────────────────────────────────────────────

def sample_poisson(window, z, mark_dist, rng, cell_size=None):
    """Homogeneous Poisson process of intensity z with i.i.d. marks."""
    if not z > 0:
        raise ValueError(f"Poisson intensity must be > 0, got {z}")
    config = Configuration(window, cell_size=cell_size)
    n = int(rng.poisson(z * window.volume))
    for _ in range(n):
        pos = window.uniform(rng)
        mark = mark_dist.sample(rng) if mark_dist is not None else None
        if config.has_position(pos):
            continue
        config.insert(MarkedPoint(pos, mark))
    return config


# ── Birth-death-move step ──────────────────────────────────────────

def _birth(state, model, schedule, window):
    config = state.config
    n = len(config)
    pos = window.uniform(state.rng)
    point = MarkedPoint(pos, model.sample_mark(state.rng))
    u = state.rng.random()
    if config.has_position(pos):
        return False
    lam = model.papangelou(point, config)
    ratio = lam * window.volume * schedule.p_death / ((n + 1) * schedule.p_birth)
    if u < ratio:
        config.insert(point)
        return True
    return False


def _death(state, model, schedule, window):
    config = state.config
    n = len(config)
    if n == 0:
        return False
    pid = config.random_id(state.rng)
    u = state.rng.random()
    point = config.remove(pid)
    lam = model.papangelou(point, config)
    if lam == 0.0:
        return True
    ratio = n * schedule.p_birth / (lam * window.volume * schedule.p_death)
    if u < ratio:
        return True
    config.insert(point, point_id=pid)
    return False


def _move(state, model, schedule, window):
    config = state.config
    if len(config) == 0:
        return False
    pid = config.random_id(state.rng)
    step = state.rng.normal(0.0, schedule.move_sigma, size=window.dim)
    u = state.rng.random()
    old = config.point(pid)
    target = tuple(c + s for c, s in zip(old.pos, step))
    if window.periodic:
        target = window.wrap(target)
    elif not window.contains(target):
        return False
    if config.has_position(target):
        return False

    config.remove(pid)
    new = MarkedPoint(target, old.mark)
    lam_old = model.papangelou(old, config)
    lam_new = model.papangelou(new, config)
    if lam_old == 0.0 or u < lam_new / lam_old:
        config.insert(new, point_id=pid)
        return True
    config.insert(old, point_id=pid)
    return False


_PROPOSALS = {"birth": _birth, "death": _death, "move": _move}


def bdm_step(state, model, schedule):
    """One birth, death or move proposal. Mutates and returns the state."""
    window = state.config.window
    u = state.rng.random()
    if u < schedule.p_birth:
        kind = "birth"
    elif u < schedule.p_birth + schedule.p_death:
        kind = "death"
    else:
        kind = "move"
    state.proposed[kind] += 1
    if _PROPOSALS[kind](state, model, schedule, window):
        state.accepted[kind] += 1
    state.step += 1
    return state


# ── Chains ─────────────────────────────────────────────────────────

def sample_chain(model, window, schedule, n_samples, seed, chain_index=0, initial=None):
    """Run one chain and return its snapshots with acceptance statistics."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    schedule = schedule.resolved(model, window)
    config = initial.copy() if initial is not None else model.new_configuration(window)
    state = ChainState(config=config, rng=make_rng(seed, chain_index))
    log = logging.getLogger(f"Sampler.chain_{chain_index:03d}")

    log.info(
        f"Chain {chain_index} starting: model={model.KIND}, z={model.z}, beta={model.beta}, "
        f"burn_in={schedule.burn_in}, thin={schedule.thin}, n_samples={n_samples}"
    )
    for _ in range(schedule.burn_in):
        bdm_step(state, model, schedule)

    stride = max(1, schedule.thin)
    report_every = max(1, n_samples // PROGRESS_CHUNKS)
    snapshots = []
    for i in range(n_samples):
        for _ in range(stride):
            bdm_step(state, model, schedule)
        snapshots.append(state.config.copy())
        if (i + 1) % report_every == 0:
            log.info(f"Chain {chain_index}: {i + 1}/{n_samples} samples, n={len(state.config)}")

    acceptance = state.acceptance()
    rates = ", ".join(
        f"{kind}={stats['rate']:.3f}" if stats["rate"] is not None else f"{kind}=n/a"
        for kind, stats in acceptance.items()
    )
    log.info(f"Chain {chain_index} done after {state.step} steps (acceptance: {rates})")
    return ChainRun(snapshots=snapshots, acceptance=acceptance, seed=seed,
                    chain_index=chain_index, steps=state.step)


def run_chain(model, window, schedule, n_samples, seed):
    return sample_chain(model, window, schedule, n_samples, seed).snapshots


def run_chains(model, window, schedule, n_samples, seed, n_chains=1, threads=1):
    """Independent chains on per-chain streams derived from (seed, chain index)."""
    if n_chains < 1:
        raise ValueError(f"n_chains must be >= 1, got {n_chains}")
    logger.info(f"Running {n_chains} chain(s) on {threads} worker(s)")
    return Parallel(n_jobs=threads)(
        delayed(sample_chain)(model, window, schedule, n_samples, seed, chain_index=i)
        for i in range(n_chains)
    )


# ── Brute-force oracle ─────────────────────────────────────────────

@dataclass
class OracleResult:
    probabilities: np.ndarray
    mean: float
    var: float
    partition_terms: np.ndarray
    tail_mass: float
    partition_se: np.ndarray
    probability_se: np.ndarray
    mc_samples: int
    distance_edges: np.ndarray | None = None
    pair_histogram: np.ndarray | None = None
    pair_histogram_se: np.ndarray | None = None

    def to_dict(self):
        data = {
            "probabilities": self.probabilities.tolist(),
            "probability_se": self.probability_se.tolist(),
            "mean": self.mean,
            "var": self.var,
            "partition_terms": self.partition_terms.tolist(),
            "partition_se": self.partition_se.tolist(),
            "tail_mass": self.tail_mass,
            "mc_samples": self.mc_samples,
        }
        if self.pair_histogram is not None:
            data["distance_edges"] = self.distance_edges.tolist()
            data["pair_histogram"] = self.pair_histogram.tolist()
            data["pair_histogram_se"] = self.pair_histogram_se.tolist()
        return data


def uniform_tuples(window, m, n, rng):
    """(m, n, d) array of i.i.d. uniform positions in the window."""
    return rng.random((m, n, window.dim)) * window.side


def _generic_tuple_weights(model, window, positions):
    weights = np.empty(len(positions))
    for row, tup in enumerate(positions):
        config = model.new_configuration(window, points=[MarkedPoint(tuple(p)) for p in tup])
        energy = model.global_energy(config)
        weights[row] = 0.0 if energy == math.inf else math.exp(-model.beta * energy)
    distances = tuple_pair_distances(window, positions)
    return weights, distances


def _boltzmann_moments(model, window, n, mc_samples, rng, edges):
    """Monte Carlo moments of w = exp(-beta H) over uniform n-tuples.

    Returns (E w, SE of E w, E[w h], E[(w h)^2], E[w^2 h]) with h the
    per-tuple pair-distance histogram.
    """
    bins = 0 if edges is None else len(edges) - 1
    total = total_sq = 0.0
    hist = np.zeros(bins)
    hist_sq = np.zeros(bins)
    hist_cross = np.zeros(bins)
    remaining = mc_samples
    while remaining > 0:
        m = min(ORACLE_CHUNK, remaining)
        remaining -= m
        positions = uniform_tuples(window, m, n, rng)
        if isinstance(model, PairModel):
            weights, distances = model.tuple_weights(window, positions)
        else:
            weights, distances = _generic_tuple_weights(model, window, positions)
        total += math.fsum(weights)
        total_sq += math.fsum(weights * weights)
        if bins:
            idx = np.searchsorted(edges, distances, side="right") - 1
            counts = np.stack([(idx == b).sum(axis=1) for b in range(bins)], axis=1)
            weighted = counts * weights[:, None]
            hist += weighted.sum(axis=0)
            hist_sq += (weighted ** 2).sum(axis=0)
            hist_cross += (weighted * weights[:, None]).sum(axis=0)
    mean = total / mc_samples
    var = max(total_sq / mc_samples - mean * mean, 0.0)
    return mean, math.sqrt(var / mc_samples), hist / mc_samples, hist_sq / mc_samples, hist_cross / mc_samples


def brute_force_oracle(model, window, n_max, mc_samples=200_000, truncation_tol=1e-6, seed=0,
                       distance_edges=None):
    """Law of N from partition terms Z_n = (z^n / n!) int_{Lambda^n} exp(-beta H).

    Z_0 and Z_1 are exact. For n >= 2, Z_n = (z |Lambda|)^n / n! * E[exp(-beta H)]
    over n i.i.d. uniform points, estimated from mc_samples tuples with its
    standard error; exact when beta = 0. With distance_edges the result also
    carries the expected number of point pairs per distance bin.
    """
    if model.marked:
        raise ValueError("brute_force_oracle supports unmarked models only")
    if int(mc_samples) != mc_samples or mc_samples < 2:
        raise ValueError(f"mc_samples must be an integer >= 2, got {mc_samples}")
    model.check_window(window)
    upper = model.upper_stability(window)
    if upper is None:
        raise ValueError(f"{model.KIND} model is not locally stable from above; no dominating Poisson")
    tail = float(poisson.sf(n_max, upper * window.volume))
    if tail > truncation_tol:
        raise TruncationError(
            f"P(N > {n_max}) = {tail:.3e} under the dominating Poisson(mean={upper * window.volume:.4g}) "
            f"exceeds truncation_tol={truncation_tol:.1e}"
        )

    edges = None if distance_edges is None else np.asarray(distance_edges, dtype=float)
    if edges is not None and (edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0)):
        raise ValueError("distance_edges must be a strictly increasing 1-D array with >= 2 entries")
    bins = 0 if edges is None else len(edges) - 1

    rng = make_rng(seed, ORACLE_STREAM)
    expected = model.z * window.volume
    terms = np.zeros(n_max + 1)
    term_se = np.zeros(n_max + 1)
    hist_terms = np.zeros((n_max + 1, bins))
    hist_sq = np.zeros((n_max + 1, bins))
    hist_cross = np.zeros((n_max + 1, bins))
    terms[0] = 1.0
    if n_max >= 1:
        center = MarkedPoint(tuple([window.side / 2] * window.dim))
        single = model.new_configuration(window, points=[center])
        energy = model.global_energy(single)
        terms[1] = 0.0 if energy == math.inf else expected * math.exp(-model.beta * energy)
    for n in range(2, n_max + 1):
        scale = expected ** n / math.factorial(n)
        if model.beta == 0.0 and not bins:
            mean_weight, se = 1.0, 0.0
        else:
            mean_weight, se, h, h2, hx = _boltzmann_moments(model, window, n, int(mc_samples), rng, edges)
            if bins:
                hist_terms[n], hist_sq[n], hist_cross[n] = scale * h, scale ** 2 * h2, scale ** 2 * hx
            if model.beta == 0.0:
                mean_weight, se = 1.0, 0.0
        terms[n] = scale * mean_weight
        term_se[n] = scale * se
        logger.debug(f"Oracle Z_{n} = {terms[n]:.6g} +- {term_se[n]:.2g}")

    total = terms.sum()
    probabilities = terms / total
    # delta method, treating the Z_n estimates as independent
    jacobian = (np.eye(n_max + 1) - probabilities[:, None]) / total
    probability_se = np.sqrt((jacobian ** 2) @ term_se ** 2)
    counts = np.arange(n_max + 1)
    mean = float(probabilities @ counts)
    var = float(probabilities @ (counts - mean) ** 2)

    pair_histogram = pair_histogram_se = None
    if bins:
        # E[pairs per bin] = sum_n H_n / sum_n Z_n, H_n the weighted histogram term
        pair_histogram = hist_terms.sum(axis=0) / total
        m = int(mc_samples)
        hist_var = (hist_sq - hist_terms ** 2) / m
        cross = (hist_cross - hist_terms * terms[:, None]) / m
        ratio_var = (hist_var - 2 * pair_histogram * cross).sum(axis=0) / total ** 2 \
            + pair_histogram ** 2 * (term_se ** 2).sum() / total ** 2
        pair_histogram_se = np.sqrt(np.maximum(ratio_var, 0.0))

    return OracleResult(probabilities=probabilities, mean=mean, var=var, partition_terms=terms,
                        tail_mass=tail, partition_se=term_se, probability_se=probability_se,
                        mc_samples=int(mc_samples), distance_edges=edges,
                        pair_histogram=pair_histogram, pair_histogram_se=pair_histogram_se)
