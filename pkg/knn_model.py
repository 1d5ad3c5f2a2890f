"""k-nearest-neighbour Gibbs model.

H(gamma) = sum_{y in gamma} sum_{v in V^k(y, gamma)} Phi(|y - v|), with V^k the
k nearest neighbours ordered by distance and then by lexicographic position.
Inserting x changes the first sum for x itself and, for every y that adopts
x as a neighbour, swaps v^k(y, gamma) for x.

The candidate search for such y uses a cone cover around x: directions are
grouped into cones of half-angle pi/6 around the axes of integer vectors in
{-2..2}^d; once every cone holds k points within D, no y beyond 2D can adopt x.
"""

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from base_model import BaseModel
from geometry import MarkedPoint

POTENTIAL_KINDS = ("tabulated", "coulomb", "custom")
CONE_HALF_ANGLE = math.pi / 6


@dataclass(frozen=True)
class RadialPotential:
    """Radial potential Phi(r) for the kNN energy."""

    kind: str
    r_grid: tuple | None = None
    phi_grid: tuple | None = None
    func: object = None
    bounded: bool = False
    decreasing_nonnegative: bool = False
    sup: float | None = None

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"Unknown radial potential: {self.kind!r} (expected one of {POTENTIAL_KINDS})")
        if self.kind == "tabulated":
            if self.r_grid is None or self.phi_grid is None:
                raise ValueError("tabulated potential requires r_grid and phi_grid")
            r = np.asarray(self.r_grid, dtype=float)
            phi = np.asarray(self.phi_grid, dtype=float)
            if r.ndim != 1 or r.shape != phi.shape or len(r) < 2 or np.any(np.diff(r) <= 0):
                raise ValueError("tabulated r_grid must be strictly increasing and match phi_grid")
            if not np.all(np.isfinite(phi)):
                raise ValueError("tabulated phi_grid must be finite")
            object.__setattr__(self, "r_grid", tuple(float(v) for v in r))
            object.__setattr__(self, "phi_grid", tuple(float(v) for v in phi))
            object.__setattr__(self, "bounded", True)
            object.__setattr__(self, "sup", float(np.max(np.abs(phi))))
            diffs = np.diff(phi)
            object.__setattr__(self, "decreasing_nonnegative",
                               bool(np.all(diffs <= 0) and phi[-1] >= 0 and np.all(phi >= 0)))
        elif self.kind == "coulomb":
            object.__setattr__(self, "decreasing_nonnegative", True)
        elif self.kind == "custom":
            if not callable(self.func):
                raise ValueError("custom potential requires a callable func")
            if not (self.bounded or self.decreasing_nonnegative):
                raise ValueError("custom potential must be flagged bounded or decreasing_nonnegative")
            if self.bounded and (self.sup is None or not self.sup >= 0):
                raise ValueError("bounded custom potential requires sup >= 0")

    @classmethod
    def coulomb(cls):
        return cls("coulomb")

    @classmethod
    def tabulated(cls, r_grid, phi_grid):
        return cls("tabulated", r_grid=tuple(r_grid), phi_grid=tuple(phi_grid))

    @classmethod
    def custom(cls, func, bounded=False, decreasing_nonnegative=False, sup=None):
        return cls("custom", func=func, bounded=bounded,
                   decreasing_nonnegative=decreasing_nonnegative, sup=sup)

    def check_dimension(self, dim):
        if self.kind == "coulomb" and dim < 3:
            raise ValueError(f"coulomb potential r^(2-d) requires d >= 3, got {dim}")

    def sup_norm(self):
        if self.kind == "coulomb":
            return math.inf
        return self.sup

    def __call__(self, r, dim):
        if self.kind == "coulomb":
            if r == 0:
                raise ValueError("coulomb potential is singular at r = 0")
            return r ** (2 - dim)
        if self.kind == "tabulated":
            if r >= self.r_grid[-1]:
                return self.phi_grid[-1]
            return float(np.interp(r, self.r_grid, self.phi_grid))
        return float(self.func(r))

    def to_dict(self):
        if self.kind == "tabulated":
            return {"potential": "tabulated", "r": list(self.r_grid), "phi": list(self.phi_grid)}
        return {"potential": self.kind}


@dataclass(frozen=True)
class KnnSpec:
    z: float
    beta: float
    k: int
    phi: RadialPotential
    n_d: float | None = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be an integer >= 1, got {self.k}")
        if self.n_d is not None and not self.n_d >= 1:
            raise ValueError(f"N_d must be >= 1, got {self.n_d}")


# ── Cone cover ─────────────────────────────────────────────────────

@lru_cache(maxsize=None)
def cone_axes(dim):
    """Unit axes of the integer vectors in {-2..2}^d minus 0, deduplicated by direction."""
    axes = {}
    for vec in itertools.product(range(-2, 3), repeat=dim):
        if not any(vec):
            continue
        g = math.gcd(*[abs(c) for c in vec])
        axes[tuple(c // g for c in vec)] = None
    units = np.array(list(axes), dtype=float)
    return units / np.linalg.norm(units, axis=1, keepdims=True)


def default_nd(dim):
    """Cone count: each cone holds at most k points adopting x, so N_d <= #cones."""
    return float(len(cone_axes(dim)))


def _order_key(window, origin, point):
    return (window.distance(origin, point.pos), point.pos)


def knn_neighbors(x, config, k, exclude=None):
    """The min(k, n) nearest point ids, ordered by distance then lexicographic position."""
    pos = tuple(getattr(x, "pos", x))
    window = config.window
    available = len(config) - (1 if exclude is not None and exclude in config else 0)
    want = min(k, available)
    if want <= 0:
        return []
    radius = config.cell_width
    while True:
        reach = min(radius, window.max_distance)
        ids = [pid for pid in config.neighbors_within(pos, reach) if pid != exclude]
        if len(ids) >= want or reach >= window.max_distance:
            break
        radius *= 2
    ids.sort(key=lambda pid: _order_key(window, pos, config.point(pid)))
    return ids[:want]


def certificate_radius(x, config, k):
    """Radius 2D beyond which no point can have x among its k nearest neighbours."""
    window = config.window
    if len(config) < k:
        return math.inf
    axes = cone_axes(window.dim)
    cos_half = math.cos(CONE_HALF_ANGLE)
    radius = config.cell_width
    while True:
        reach = min(radius, window.max_distance)
        counts = np.zeros(len(axes), dtype=int)
        kth = np.full(len(axes), math.inf)
        ids = config.neighbors_within(x, reach)
        if ids:
            deltas = np.array([window.displacement(config.point(pid).pos, x) for pid in ids])
            dists = np.linalg.norm(deltas, axis=1)
            cosines = (deltas @ axes.T) / dists[:, None]
            for j in range(len(axes)):
                in_cone = np.sort(dists[cosines[:, j] >= cos_half])
                counts[j] = len(in_cone)
                if len(in_cone) >= k:
                    kth[j] = in_cone[k - 1]
        if np.all(counts >= k):
            return 2 * float(np.max(kth))
        if reach >= window.max_distance:
            return math.inf
        radius *= 2


def adopting_points(x, config, k):
    """[(id, v^k(y, gamma) id or None)] for every y with x in V^k(y, gamma + x)."""
    window = config.window
    radius = certificate_radius(x.pos, config, k)
    if radius >= window.max_distance:
        candidates = config.ids()
    else:
        candidates = config.neighbors_within(x.pos, radius)
    adopters = []
    for pid in candidates:
        y = config.point(pid)
        nearest = knn_neighbors(y, config, k, exclude=pid)
        if len(nearest) < k:
            adopters.append((pid, None))
            continue
        last = nearest[-1]
        if _order_key(window, y.pos, x) < _order_key(window, y.pos, config.point(last)):
            adopters.append((pid, last))
    return adopters


def knn_influence_count(x, config, k):
    """#{y : x in V^k(y, gamma + x)}."""
    return len(adopting_points(x, config, k))


def knn_local_energy(spec, x, config):
    window = config.window
    dim = window.dim
    terms = []
    for pid in knn_neighbors(x, config, spec.k):
        terms.append(spec.phi(window.distance(x.pos, config.point(pid).pos), dim))
    for pid, evicted in adopting_points(x, config, spec.k):
        y = config.point(pid)
        terms.append(spec.phi(window.distance(y.pos, x.pos), dim))
        if evicted is not None:
            # missing v^k (fewer than k neighbours) contributes 0
            terms.append(-spec.phi(window.distance(y.pos, config.point(evicted).pos), dim))
    return math.fsum(terms)


class KnnModel(BaseModel):
    """Gibbs model on the directed k-nearest-neighbour graph."""

    KIND = "knn"

    def __init__(self, spec, dim):
        super().__init__(spec.z, spec.beta, dim)
        spec.phi.check_dimension(dim)
        self.spec = spec
        self.n_d = spec.n_d if spec.n_d is not None else default_nd(dim)

    @classmethod
    def from_section(cls, section, dim):
        kind = section.get("potential", "tabulated")
        if kind == "coulomb":
            phi = RadialPotential.coulomb()
        elif kind == "tabulated":
            if "r" not in section or "phi" not in section:
                raise ValueError("knn tabulated potential requires r and phi")
            phi = RadialPotential.tabulated(section["r"], section["phi"])
        else:
            raise ValueError(f"Potential {kind!r} cannot be configured from a file")
        spec = KnnSpec(z=float(section["z"]), beta=float(section.get("beta", 1.0)),
                       k=int(section.get("k", 1)), phi=phi, n_d=section.get("n_d"))
        return cls(spec, dim)

    def to_section(self):
        section = {"kind": self.KIND, "z": self.z, "beta": self.beta, "k": self.spec.k, "n_d": self.n_d}
        section.update(self.spec.phi.to_dict())
        return section

    def local_energy(self, x, config):
        return knn_local_energy(self.spec, x, config)

    def global_energy(self, config):
        window = config.window
        terms = []
        for pid, y in config.items():
            for vid in knn_neighbors(y, config, self.spec.k, exclude=pid):
                terms.append(self.spec.phi(window.distance(y.pos, config.point(vid).pos), self.dim))
        return math.fsum(terms)

    def interaction_cutoff(self, window):
        return None

    def upper_stability(self, window):
        if self.spec.phi.decreasing_nonnegative:
            return self.z
        if self.spec.phi.bounded:
            return self.z * math.exp(self.beta * (1 + 2 * self.n_d) * self.spec.k * self.spec.phi.sup_norm())
        return None

    def describe(self):
        info = super().describe()
        info.update(self.to_section())
        return info


def estimate_nd(model, samples, n_probes, rng):
    """Empirical N_d: the largest #{y : x in V^k(y, gamma + x)} / k over uniform probes."""
    if not isinstance(model, KnnModel):
        raise ValueError(f"estimate_nd needs a knn model, got {model.KIND}")
    if n_probes < 1:
        raise ValueError(f"n_probes must be >= 1, got {n_probes}")
    worst = 0
    for config in samples:
        window = config.window
        for _ in range(n_probes):
            pos = window.uniform(rng)
            if config.has_position(pos):
                continue
            worst = max(worst, knn_influence_count(MarkedPoint(pos), config, model.spec.k))
    return max(1.0, worst / model.spec.k)
