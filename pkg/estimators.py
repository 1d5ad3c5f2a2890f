"""Estimators — variance curves, structure factor, GNZ residuals and diagnostics.

All estimators fold over read-only snapshots. Standard errors use batch
means so correlated chain output is not treated as independent.
"""

import csv
import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import beta as beta_dist

from base_model import HardCoreConflict
from geometry import MarkedPoint, SubWindow, tuple_pair_distances
from sampler import make_rng

logger = logging.getLogger("Estimators")

MIN_VARIANCE_SAMPLES = 30
MIN_CHAIN_BATCHES = 10
DEFAULT_WINDOW_FRACTIONS = (0.1, 0.2, 0.4, 0.6, 0.8)
TEST_FUNCTIONS = ("constant", "local_count", "hard_core")
MAX_PROBE_RETRIES = 100
OCCUPANCY_TOLERANCE = 1e-9
# probe streams sit far above any chain index
ANALYSIS_STREAM = 1 << 20


class InsufficientSamplesError(ValueError):
    """Too few samples for the requested estimator."""


# ── Result types ───────────────────────────────────────────────────

@dataclass(frozen=True)
class VarianceRow:
    volume: float
    mean: float
    var: float
    var_per_volume: float
    se: float
    n_samples: int


@dataclass(frozen=True)
class PairHistogram:
    edges: tuple
    mean: tuple
    se: tuple
    n_samples: int


@dataclass(frozen=True)
class VarianceCurve:
    rows: tuple
    fractions: tuple

    HEADER = ("fraction", "volume", "mean", "var", "var_per_volume", "se", "n_samples")

    def as_rows(self):
        return [(f, r.volume, r.mean, r.var, r.var_per_volume, r.se, r.n_samples)
                for f, r in zip(self.fractions, self.rows)]


@dataclass(frozen=True)
class StructureFactorRow:
    m: tuple
    k: float
    s: float
    se: float
    n_samples: int


@dataclass(frozen=True)
class GnzResult:
    test_function: str
    lhs: float
    rhs: float
    residual: float
    se: float
    n_samples: int

    @property
    def z_score(self):
        if self.se == 0:
            return 0.0 if self.residual == 0 else math.copysign(math.inf, self.residual)
        return self.residual / self.se


@dataclass(frozen=True)
class MomentEstimate:
    estimate: float
    se: float
    n_samples: int = 0


@dataclass(frozen=True)
class A2Row:
    radius: float
    estimate: float
    se: float
    n_samples: int


@dataclass(frozen=True)
class A2Profile:
    rows: tuple
    alpha2: float
    conflicts: int


@dataclass(frozen=True)
class OccupancyField:
    side: float
    occupied: np.ndarray

    @property
    def cell_count(self):
        return self.occupied.size


@dataclass(frozen=True)
class DominationResult:
    min_occupancy: float
    lower_bound: float
    passed: bool
    se: float
    p: float
    n_samples: int


# ── Helpers ────────────────────────────────────────────────────────

def _as_samples(samples):
    if hasattr(samples, "window"):
        return [samples]
    samples = list(samples)
    if not samples:
        raise InsufficientSamplesError("No samples given")
    window = samples[0].window
    if any(s.window != window for s in samples):
        raise ValueError("All samples must share one window")
    return samples


def batch_means_se(values, batch_size=None):
    """Standard error of the mean by non-overlapping batch means, b = floor(sqrt(n))."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 2:
        raise InsufficientSamplesError(f"Need at least 2 values for a standard error, got {n}")
    b = batch_size or int(math.floor(math.sqrt(n)))
    a = n // b
    if a < 2:
        return float(np.std(values, ddof=1) / math.sqrt(n))
    batches = values[: a * b].reshape(a, b).mean(axis=1)
    return float(math.sqrt(b * np.sum((batches - batches.mean()) ** 2) / (a - 1) / n))


def stratified_probes(window, n_probes, rng):
    """One uniform point per cell of an m^d grid with m = ceil(n_probes^(1/d))."""
    m = max(1, int(math.ceil(n_probes ** (1.0 / window.dim) - 1e-9)))
    cell = window.side / m
    corners = np.array(list(itertools.product(range(m), repeat=window.dim)), dtype=float) * cell
    points = corners + rng.random(corners.shape) * cell
    return [window.wrap(p) for p in points]


def _random_direction(dim, rng):
    while True:
        v = rng.normal(size=dim)
        norm = np.linalg.norm(v)
        if norm > 0:
            return v / norm


def write_rows_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


# ── Counts and variance ────────────────────────────────────────────

def count_in_window(config, sub_window):
    window = config.window
    if any(lo < 0 or lo + sub_window.side > window.side + 1e-12 for lo in sub_window.lower):
        raise ValueError(f"Sub-window {sub_window} is not inside the window")
    positions = config.positions()
    if len(positions) == 0:
        return 0
    lower = np.asarray(sub_window.lower)
    inside = np.all((positions >= lower) & (positions < lower + sub_window.side), axis=1)
    return int(np.count_nonzero(inside))


def pair_distance_counts(config, edges):
    """Number of point pairs per distance bin [edges[i], edges[i+1])."""
    edges = np.asarray(edges, dtype=float)
    bins = len(edges) - 1
    positions = config.positions()
    if len(positions) < 2:
        return np.zeros(bins, dtype=int)
    distances = tuple_pair_distances(config.window, positions[None, :, :])[0]
    idx = np.searchsorted(edges, distances, side="right") - 1
    return np.bincount(idx[(idx >= 0) & (idx < bins)], minlength=bins)


def pair_distance_histogram(samples, edges):
    """Mean pair count per distance bin over the samples, with batch-means SEs."""
    samples = _as_samples(samples)
    counts = np.array([pair_distance_counts(s, edges) for s in samples], dtype=float)
    se = [batch_means_se(counts[:, b]) for b in range(counts.shape[1])]
    return PairHistogram(edges=tuple(float(e) for e in edges), mean=tuple(counts.mean(axis=0).tolist()),
                         se=tuple(se), n_samples=len(samples))


def _batch_labels(n, chain_ids):
    """Batch index per sample: whole chains when there are enough, sqrt(n) blocks otherwise."""
    if chain_ids is not None:
        chain_ids = np.asarray(chain_ids)
        if len(chain_ids) != n:
            raise ValueError(f"chain_ids has {len(chain_ids)} entries for {n} samples")
        chains = list(dict.fromkeys(chain_ids.tolist()))
        if len(chains) >= MIN_CHAIN_BATCHES:
            lookup = {c: i for i, c in enumerate(chains)}
            return np.array([lookup[c] for c in chain_ids.tolist()])
    b = int(math.floor(math.sqrt(n)))
    labels = np.arange(n) // b
    # fold a short tail into the last full batch
    labels[labels >= n // b] = n // b - 1
    return labels


def variance_curve(samples, window_fractions=DEFAULT_WINDOW_FRACTIONS, chain_ids=None):
    """Var(N)/|Lambda| over centred sub-boxes, with batch-means standard errors."""
    samples = _as_samples(samples)
    n = len(samples)
    if n < MIN_VARIANCE_SAMPLES:
        raise InsufficientSamplesError(f"variance_curve needs >= {MIN_VARIANCE_SAMPLES} samples, got {n}")
    fractions = sorted(set(float(f) for f in window_fractions))
    window = samples[0].window
    labels = _batch_labels(n, chain_ids)
    n_batches = labels.max() + 1

    rows = []
    for fraction in fractions:
        sub = SubWindow.centered(window, fraction)
        counts = np.array([count_in_window(s, sub) for s in samples], dtype=float)
        var = float(np.var(counts, ddof=1))
        batch_vars = np.array([
            np.var(counts[labels == b], ddof=1) / sub.volume
            for b in range(n_batches) if np.count_nonzero(labels == b) > 1
        ])
        se = float(np.std(batch_vars, ddof=1) / math.sqrt(len(batch_vars))) if len(batch_vars) > 1 else 0.0
        rows.append(VarianceRow(
            volume=sub.volume,
            mean=float(counts.mean()),
            var=var,
            var_per_volume=var / sub.volume,
            se=se,
            n_samples=n,
        ))
    logger.debug(f"Variance curve over {len(fractions)} windows from {n} samples")
    return VarianceCurve(rows=tuple(rows), fractions=tuple(fractions))


def estimate_intensity(samples):
    samples = _as_samples(samples)
    volume = samples[0].window.volume
    densities = np.array([len(s) / volume for s in samples])
    se = batch_means_se(densities) if len(densities) > 1 else 0.0
    return MomentEstimate(estimate=float(densities.mean()), se=se, n_samples=len(samples))


# ── Structure factor ───────────────────────────────────────────────

def default_wavevectors(dim, max_index=3):
    """Integer vectors m with |m|_inf <= max_index, one of each +/- pair, by |m|."""
    vectors = []
    for m in itertools.product(range(-max_index, max_index + 1), repeat=dim):
        nonzero = [c for c in m if c != 0]
        if nonzero and nonzero[0] > 0:
            vectors.append(m)
    vectors.sort(key=lambda m: (sum(c * c for c in m), m))
    return vectors


def structure_factor(samples, wavevectors):
    """S(k) = |sum_x exp(i k.x)|^2 / N with k = 2 pi m / L, averaged over snapshots."""
    samples = _as_samples(samples)
    window = samples[0].window
    rows = []
    for m in wavevectors:
        m = tuple(int(c) for c in m)
        if len(m) != window.dim:
            raise ValueError(f"Wavevector {m} does not match dimension {window.dim}")
        if not any(m):
            raise ValueError("k = 0 is excluded from the structure factor")
        k = 2 * math.pi * np.asarray(m, dtype=float) / window.side
        values = []
        for config in samples:
            positions = config.positions()
            if len(positions) == 0:
                continue
            amplitude = np.exp(1j * positions @ k).sum()
            values.append(float(abs(amplitude) ** 2 / len(positions)))
        if not values:
            raise InsufficientSamplesError("Structure factor needs at least one non-empty sample")
        se = batch_means_se(values) if len(values) > 1 else 0.0
        rows.append(StructureFactorRow(m=m, k=float(np.linalg.norm(k)), s=float(np.mean(values)),
                                       se=se, n_samples=len(values)))
    return rows


# ── GNZ residual ───────────────────────────────────────────────────

def _test_value(test_function, window, x, config, radius, exclude=None):
    if test_function == "constant":
        return 1.0
    ids = config.neighbors_within(x, radius)
    if exclude is not None:
        ids = [pid for pid in ids if pid != exclude]
    if test_function == "local_count":
        return float(len(ids))
    return 0.0 if ids else 1.0


def gnz_residual(samples, model, test_function="constant", radius=None, n_probes=64, seed=0):
    """lhs = E sum_{x in gamma} f(x, gamma - x), rhs = int E f(x, gamma) lambda*(x, gamma) dx."""
    if test_function not in TEST_FUNCTIONS:
        raise ValueError(f"Unknown test function {test_function!r} (expected one of {TEST_FUNCTIONS})")
    if test_function != "constant" and (radius is None or not radius > 0):
        raise ValueError(f"Test function {test_function!r} needs a radius > 0, got {radius}")
    samples = _as_samples(samples)
    window = samples[0].window
    rng = make_rng(seed, ANALYSIS_STREAM)

    lhs_values, rhs_values = [], []
    for config in samples:
        lhs = math.fsum(_test_value(test_function, window, p.pos, config, radius, exclude=pid)
                        for pid, p in config.items())
        probes = stratified_probes(window, n_probes, rng)
        integrand = []
        for pos in probes:
            if config.has_position(pos):
                continue
            x = MarkedPoint(pos, model.sample_mark(rng))
            f = _test_value(test_function, window, pos, config, radius)
            integrand.append(f * model.papangelou(x, config) if f else 0.0)
        lhs_values.append(lhs)
        rhs_values.append(window.volume * math.fsum(integrand) / max(1, len(integrand)))

    lhs_values = np.asarray(lhs_values)
    rhs_values = np.asarray(rhs_values)
    differences = lhs_values - rhs_values
    se = batch_means_se(differences) if len(differences) > 1 else 0.0
    result = GnzResult(
        test_function=test_function,
        lhs=float(lhs_values.mean()),
        rhs=float(rhs_values.mean()),
        residual=float(differences.mean()),
        se=se,
        n_samples=len(samples),
    )
    logger.info(
        f"GNZ [{test_function}]: lhs={result.lhs:.5g}, rhs={result.rhs:.5g}, "
        f"residual={result.residual:.4g} ({result.z_score:.2f} SE)"
    )
    return result


# ── Assumption diagnostics ─────────────────────────────────────────

def sampled_intensities(samples, model, n_probes=64, seed=0):
    """lambda*(x, gamma) at stratified probes of every snapshot, one row per snapshot."""
    samples = _as_samples(samples)
    window = samples[0].window
    rng = make_rng(seed, ANALYSIS_STREAM)
    rows = []
    for config in samples:
        values = []
        for pos in stratified_probes(window, n_probes, rng):
            if config.has_position(pos):
                continue
            values.append(model.papangelou(MarkedPoint(pos, model.sample_mark(rng)), config))
        rows.append(values)
    return rows


def _per_sample_moment(rows, power):
    means = np.array([np.mean(np.asarray(values) ** power) for values in rows if values])
    se = batch_means_se(means) if len(means) > 1 else 0.0
    return MomentEstimate(estimate=float(means.mean()), se=se, n_samples=len(means))


def intensity_moments(samples, model, n_probes=64, seed=0):
    """(E lambda*, E lambda*^2) estimated at stratified probes."""
    rows = sampled_intensities(samples, model, n_probes, seed)
    return _per_sample_moment(rows, 1.0), _per_sample_moment(rows, 2.0)


def a1_moment(samples, model, alpha1, n_probes=64, seed=0):
    """E lambda*(0, Gamma)^(2 alpha1)."""
    if not alpha1 > 1:
        raise ValueError(f"alpha1 must be > 1, got {alpha1}")
    rows = sampled_intensities(samples, model, n_probes, seed)
    return _per_sample_moment(rows, 2.0 * alpha1)


def a2_profile(samples, model, alpha2, radii, n_probes=64, seed=0):
    """E |1 - lambda*(x, gamma + y) / lambda*(x, gamma)|^alpha2 at |y - x| = r."""
    if not alpha2 > 1:
        raise ValueError(f"alpha2 must be > 1, got {alpha2}")
    radii = sorted(float(r) for r in radii)
    if not radii or radii[0] <= 0:
        raise ValueError(f"radii must be > 0, got {radii}")
    samples = _as_samples(samples)
    window = samples[0].window
    if window.periodic and radii[-1] > window.side / 2:
        raise ValueError(f"radius {radii[-1]} exceeds half the periodic window side {window.side / 2}")
    rng = make_rng(seed, ANALYSIS_STREAM)

    conflicts = 0
    rows = []
    for r in radii:
        per_sample = []
        for config in samples:
            values = []
            for _ in range(n_probes):
                for _ in range(MAX_PROBE_RETRIES):
                    x = MarkedPoint(window.uniform(rng), model.sample_mark(rng))
                    target = np.asarray(x.pos) + r * _random_direction(window.dim, rng)
                    if window.periodic:
                        target = window.wrap(target)
                    elif not window.contains(tuple(target)):
                        continue
                    y = MarkedPoint(tuple(target), model.sample_mark(rng))
                    if config.has_position(x.pos) or config.has_position(y.pos):
                        continue
                    try:
                        ratio = model.papangelou_ratio(x, config, y)
                    except HardCoreConflict:
                        conflicts += 1
                        continue
                    values.append(abs(1.0 - ratio) ** alpha2)
                    break
            if values:
                per_sample.append(float(np.mean(values)))
        if not per_sample:
            raise InsufficientSamplesError(f"No valid probes at radius {r}")
        se = batch_means_se(per_sample) if len(per_sample) > 1 else 0.0
        rows.append(A2Row(radius=r, estimate=float(np.mean(per_sample)), se=se, n_samples=len(per_sample)))
    if conflicts:
        logger.info(f"A2 profile: resampled {conflicts} hard-core conflict(s)")
    return A2Profile(rows=tuple(rows), alpha2=float(alpha2), conflicts=conflicts)


# ── Occupancy and domination ───────────────────────────────────────

def occupancy_field(config, s):
    """Boolean occupancy of the (L/s)^d cubes anchored at the origin."""
    window = config.window
    if not s > 0:
        raise ValueError(f"Cell side must be > 0, got {s}")
    ratio = window.side / s
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > OCCUPANCY_TOLERANCE * max(1.0, ratio):
        raise ValueError(f"Window side {window.side} is not divisible by cell side {s}")
    occupied = np.zeros((m,) * window.dim, dtype=bool)
    positions = config.positions()
    if len(positions):
        idx = np.minimum((positions / s).astype(int), m - 1)
        occupied[tuple(idx.T)] = True
    return OccupancyField(side=float(s), occupied=occupied)


def domination_check(samples, s, p, confidence=0.99):
    """Min over cells of P(occupied), with a one-sided Clopper–Pearson lower bound."""
    if not 0 < confidence < 1:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    samples = _as_samples(samples)
    n = len(samples)
    hits = sum(occupancy_field(config, s).occupied.astype(int) for config in samples)
    hits = np.asarray(hits).ravel()
    k = int(hits.min())
    freq = k / n
    lower = 0.0 if k == 0 else float(beta_dist.ppf(1 - confidence, k, n - k + 1))
    se = math.sqrt(freq * (1 - freq) / n)
    passed = lower >= p
    logger.info(
        f"Domination check: min occupancy={freq:.4f}, lower bound={lower:.4f}, p={p:.4g} -> "
        f"{'pass' if passed else 'fail'}"
    )
    return DominationResult(min_occupancy=freq, lower_bound=lower, passed=passed, se=se, p=float(p), n_samples=n)
