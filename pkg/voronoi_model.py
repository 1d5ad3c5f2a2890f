"""Voronoi-cell Gibbs model.

H(gamma) = sum_{y in gamma} Phi(C(y, gamma)), default Phi(C) = min(|C|, K).
Cells are intervals in d = 1 and convex polygons in d = 2, built by clipping
a start box with the bisector half-planes of nearby sites in order of
(distance, id, periodic image). A cell is final once twice its radius is
inside the search radius; periodic images are enumerated explicitly.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from base_model import BaseModel

NEW_POINT = -1
BOUNDARY = None
EDGE_TOLERANCE = 1e-12
SEARCH_SPACINGS = 4


@dataclass(frozen=True)
class CappedVolume:
    """Phi(C) = min(|C|, K): sub-additive, increasing, controlled by volume."""

    K: float

    def __call__(self, cell):
        return min(cell.volume, self.K)


@dataclass(frozen=True)
class VoronoiSpec:
    z: float
    beta: float
    K: float
    phi: object = None

    def __post_init__(self):
        if not (self.K > 0 and math.isfinite(self.K)):
            raise ValueError(f"Voronoi volume cap K must be > 0, got {self.K}")
        if self.phi is None:
            object.__setattr__(self, "phi", CappedVolume(self.K))


@dataclass(frozen=True)
class VoronoiCell:
    center: tuple
    volume: float
    neighbors: tuple
    radius: float
    vertices: tuple = ()
    interval: tuple | None = None


# ── Site enumeration ───────────────────────────────────────────────

def _site_positions(config, center, radius, exclude, extra):
    window = config.window
    if radius >= window.max_distance:
        ids = config.ids()
    else:
        ids = config.neighbors_within(center, radius)
    entries = [(config.point(pid).pos, pid) for pid in ids if pid not in exclude]
    entries.extend(extra)
    return entries


def _sites(config, center, radius, exclude=(), extra=()):
    """Relative site positions within radius as (distance, label, shift, vector), sorted."""
    window = config.window
    L = window.side
    found = []
    for pos, label in _site_positions(config, center, radius, exclude, extra):
        delta = np.asarray(window.displacement(pos, center))
        if not np.any(delta):
            raise ValueError(f"Site {label} coincides with the cell center {center}")
        if window.periodic:
            reach = int(math.ceil(radius / L)) + 1
            shifts = itertools.product(range(-reach, reach + 1), repeat=window.dim)
        else:
            shifts = [(0,) * window.dim]
        for shift in shifts:
            v = delta + L * np.asarray(shift, dtype=float)
            dist = float(np.sqrt(v @ v))
            if dist <= radius:
                found.append((dist, label, shift, v))
    found.sort(key=lambda site: (site[0], site[1], site[2]))
    return found


def _ids_at(config, pos):
    return [pid for pid in config.neighbors_within(pos, 0.0)]


def _site_count(config, exclude, extra):
    return len(config) - sum(1 for pid in exclude if pid in config) + len(extra)


# ── d = 1 ──────────────────────────────────────────────────────────

def _interval_cell(config, center, exclude, extra):
    window = config.window
    L = window.side
    entries = _site_positions(config, center, math.inf, exclude, extra)
    c = center[0]

    if window.periodic:
        left, right = -L, L
        left_labels, right_labels = [], []
    else:
        left, right = -2 * c, 2 * (L - c)
        left_labels, right_labels = [BOUNDARY], [BOUNDARY]

    for pos, label in entries:
        (delta,) = window.displacement(pos, center)
        if delta == 0:
            raise ValueError(f"Site {label} coincides with the cell center {center}")
        if window.periodic:
            on_left = delta if delta < 0 else delta - L
            on_right = delta if delta > 0 else delta + L
        else:
            on_left = delta if delta < 0 else -math.inf
            on_right = delta if delta > 0 else math.inf
        if on_left > left:
            left, left_labels = on_left, [label]
        elif on_left == left:
            left_labels.append(label)
        if on_right < right:
            right, right_labels = on_right, [label]
        elif on_right == right:
            right_labels.append(label)

    lo, hi = left / 2, right / 2
    neighbors = sorted({lab for lab in left_labels + right_labels if lab is not BOUNDARY})
    return VoronoiCell(
        center=tuple(center),
        volume=hi - lo,
        neighbors=tuple(neighbors),
        radius=max(-lo, hi),
        interval=(c + lo, c + hi),
    )


# ── d = 2 ──────────────────────────────────────────────────────────

def clip_half_plane(polygon, labels, v, label):
    """Clip a convex polygon (relative coords) to {p : p.v <= |v|^2 / 2}.

    labels[i] names the edge from vertex i to vertex i + 1; the new edge along
    the bisector gets `label`.
    """
    offsets = polygon @ v - 0.5 * (v @ v)
    if np.all(offsets <= 0):
        return polygon, labels
    out_points, out_labels = [], []
    n = len(polygon)
    for i in range(n):
        j = (i + 1) % n
        p, q = polygon[i], polygon[j]
        fp, fq = offsets[i], offsets[j]
        if fp <= 0:
            out_points.append(p)
            out_labels.append(labels[i])
            if fq > 0:
                out_points.append(p + (fp / (fp - fq)) * (q - p))
                out_labels.append(label)
        elif fq <= 0:
            out_points.append(p + (fp / (fp - fq)) * (q - p))
            out_labels.append(labels[i])
    return np.array(out_points), out_labels


def polygon_area(polygon):
    """Shoelace formula."""
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def _start_box(window, center):
    if window.periodic:
        half = window.side / 2
        lo = np.array([-half, -half])
        hi = np.array([half, half])
    else:
        lo = -np.asarray(center, dtype=float)
        hi = window.side - np.asarray(center, dtype=float)
    box = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    return box, [BOUNDARY] * 4


def _polygon_cell(config, center, exclude, extra):
    window = config.window
    n_sites = _site_count(config, exclude, extra)
    spacing = (window.volume / max(1, n_sites)) ** (1.0 / window.dim)
    radius = SEARCH_SPACINGS * spacing
    full_reach = 2 * window.side * math.sqrt(window.dim)

    while True:
        polygon, labels = _start_box(window, center)
        reach = float(np.max(np.linalg.norm(polygon, axis=1)))
        for dist, label, _, v in _sites(config, center, radius, exclude, extra):
            # sites are sorted, so no later bisector reaches the polygon either
            if dist > 2 * reach:
                break
            polygon, labels = clip_half_plane(polygon, labels, v, label)
            reach = float(np.max(np.linalg.norm(polygon, axis=1)))
        if 2 * reach <= radius or radius >= full_reach:
            break
        radius *= 2

    edge_lengths = np.linalg.norm(np.roll(polygon, -1, axis=0) - polygon, axis=1)
    tol = EDGE_TOLERANCE * window.side
    neighbors = sorted({lab for lab, length in zip(labels, edge_lengths)
                        if lab is not BOUNDARY and length > tol})
    return VoronoiCell(
        center=tuple(center),
        volume=polygon_area(polygon),
        neighbors=tuple(neighbors),
        radius=reach,
        vertices=tuple(tuple(float(c) for c in np.asarray(center) + p) for p in polygon),
    )


def voronoi_cell(x, config, window=None, exclude=(), extra=()):
    """Voronoi cell of x with respect to config (plus `extra` sites, minus `exclude`).

    A query at an occupied position returns the cell of that point.
    """
    center = tuple(float(c) for c in getattr(x, "pos", x))
    if window is not None and window != config.window:
        raise ValueError("Window does not match the configuration window")
    window = config.window
    if window.dim not in (1, 2):
        raise ValueError(f"Voronoi cells are implemented for d in (1, 2), got {window.dim}")
    exclude = set(exclude) | set(_ids_at(config, center))
    extra = [(tuple(pos), label) for pos, label in extra]
    if window.dim == 1:
        return _interval_cell(config, center, exclude, extra)
    return _polygon_cell(config, center, exclude, extra)


# ── Energies ───────────────────────────────────────────────────────

def _neighbor_cells(x, config, cell_x):
    """(id, cell before insertion, cell after insertion) for each Voronoi neighbour of x."""
    changes = []
    for pid in cell_x.neighbors:
        if pid == NEW_POINT:
            continue
        y = config.point(pid)
        before = voronoi_cell(y.pos, config, exclude={pid})
        after = voronoi_cell(y.pos, config, exclude={pid}, extra=[(x.pos, NEW_POINT)])
        changes.append((pid, before, after))
    return changes


def voronoi_local_energy(spec, x, config):
    """Phi(C(x)) plus the change of Phi over the Voronoi neighbours of x."""
    cell_x = voronoi_cell(x.pos, config)
    terms = [spec.phi(cell_x)]
    for _, before, after in _neighbor_cells(x, config, cell_x):
        terms.append(spec.phi(after))
        terms.append(-spec.phi(before))
    return math.fsum(terms)


def cell_splitting_volumes(x, config):
    """{y: |C(y, gamma) minus C(y, gamma + x)|}; the values sum to |C(x, gamma + x)|."""
    cell_x = voronoi_cell(x.pos, config)
    return {pid: before.volume - after.volume
            for pid, before, after in _neighbor_cells(x, config, cell_x)}


class VoronoiModel(BaseModel):
    """Gibbs model with Voronoi cell energies."""

    KIND = "voronoi"
    SUPPORTED_DIMS = (1, 2)

    def __init__(self, spec, dim):
        super().__init__(spec.z, spec.beta, dim)
        self.spec = spec

    @classmethod
    def from_section(cls, section, dim):
        spec = VoronoiSpec(z=float(section["z"]), beta=float(section.get("beta", 1.0)),
                           K=float(section["K"]))
        return cls(spec, dim)

    def to_section(self):
        return {"kind": self.KIND, "z": self.z, "beta": self.beta, "K": self.spec.K, "phi": "capped_volume"}

    def local_energy(self, x, config):
        return voronoi_local_energy(self.spec, x, config)

    def global_energy(self, config):
        return math.fsum(self.spec.phi(voronoi_cell(p.pos, config, exclude={pid}))
                         for pid, p in config.items())

    def cell(self, x, config):
        return voronoi_cell(x.pos, config)

    def interaction_cutoff(self, window):
        return None

    def upper_stability(self, window):
        if not isinstance(self.spec.phi, CappedVolume):
            return None
        return self.z * math.exp(self.beta * (self.spec.K + window.volume))

    def describe(self):
        info = super().describe()
        info.update(self.to_section())
        return info
