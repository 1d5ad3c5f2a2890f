"""Geometry core — windows, marked points, configurations and the grid index.

Every other module queries point sets through this one. Coordinates are kept
in absolute units inside [0, L)^d; periodic windows use the minimum-image
metric, free windows the plain Euclidean one.
"""

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gamma as gamma_fn

SUPPORTED_DIMS = (1, 2, 3)
DEFAULT_GRID_DIVISIONS = 16


# ── Windows ─────────────────────────────────────────────────────────

class Boundary(Enum):
    PERIODIC = "periodic"
    FREE = "free"


def unit_ball_volume(d):
    """Volume of the unit ball in dimension d >= 0 (|B|_0 = 1)."""
    if d < 0:
        raise ValueError(f"Dimension must be non-negative, got {d}")
    return math.pi ** (d / 2) / gamma_fn(d / 2 + 1)


def ball_volume(d, r):
    """Volume pi^{d/2} r^d / Gamma(d/2 + 1) of a ball of radius r."""
    if d not in SUPPORTED_DIMS:
        raise ValueError(f"Unsupported dimension: {d} (expected one of {SUPPORTED_DIMS})")
    if r < 0:
        raise ValueError(f"Radius must be non-negative, got {r}")
    return float(unit_ball_volume(d) * r ** d)


@dataclass(frozen=True)
class Window:
    """Box [0, L)^d with a boundary mode."""

    side: float
    dim: int
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        if not self.side > 0 or not math.isfinite(self.side):
            raise ValueError(f"Window side must be a positive finite number, got {self.side}")
        if self.dim not in SUPPORTED_DIMS:
            raise ValueError(f"Unsupported dimension: {self.dim}")
        if not isinstance(self.boundary, Boundary):
            object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def volume(self):
        return self.side ** self.dim

    @property
    def periodic(self):
        return self.boundary is Boundary.PERIODIC

    @property
    def max_distance(self):
        """Largest possible distance between two points of the window."""
        span = self.side / 2 if self.periodic else self.side
        return span * math.sqrt(self.dim)

    def contains(self, pos):
        return len(pos) == self.dim and all(0.0 <= c < self.side for c in pos)

    def wrap(self, pos):
        """Map a position back into [0, L)^d."""
        wrapped = []
        for c in pos:
            w = c % self.side
            # c % L can round up to L for tiny negative c
            wrapped.append(0.0 if w >= self.side else w)
        return tuple(wrapped)

    def displacement(self, a, b):
        """Vector from b to a, minimum image under periodic boundary."""
        delta = [ai - bi for ai, bi in zip(a, b)]
        if self.periodic:
            L = self.side
            delta = [di - L * round(di / L) for di in delta]
        return tuple(delta)

    def distance(self, a, b):
        return math.sqrt(sum(di * di for di in self.displacement(a, b)))

    def uniform(self, rng):
        return self.wrap(float(c) for c in rng.random(self.dim) * self.side)

    def to_dict(self):
        return {"dim": self.dim, "side": self.side, "boundary": self.boundary.value}

    @classmethod
    def from_dict(cls, data):
        return cls(side=float(data["side"]), dim=int(data["dim"]),
                   boundary=Boundary(data.get("boundary", "periodic")))


@dataclass(frozen=True)
class SubWindow:
    """Axis-aligned sub-box [lower, lower + side)^d of a window."""

    lower: tuple
    side: float

    @property
    def volume(self):
        return self.side ** len(self.lower)

    @classmethod
    def centered(cls, window, fraction):
        """Centred sub-box holding the given fraction of the window volume."""
        if not 0 < fraction <= 1:
            raise ValueError(f"Window fraction must be in (0, 1], got {fraction}")
        side = window.side * fraction ** (1.0 / window.dim)
        offset = (window.side - side) / 2
        return cls(lower=tuple([offset] * window.dim), side=side)

    def contains(self, pos):
        return all(lo <= c < lo + self.side for lo, c in zip(self.lower, pos))


def distance(window, a, b):
    """Euclidean (free) or minimum-image torus (periodic) distance."""
    return window.distance(a, b)


def pairwise_distances(window, x, positions):
    """Distances from x to each row of an (n, d) position array."""
    positions = np.asarray(positions, dtype=float).reshape(-1, window.dim)
    delta = positions - np.asarray(x, dtype=float)
    if window.periodic:
        delta -= window.side * np.round(delta / window.side)
    return np.sqrt(np.sum(delta * delta, axis=1))


def tuple_pair_distances(window, positions):
    """(m, n(n-1)/2) pair distances for a stack of m n-point tuples, pairs in triu order."""
    positions = np.asarray(positions, dtype=float)
    i, j = np.triu_indices(positions.shape[1], k=1)
    delta = positions[:, i, :] - positions[:, j, :]
    if window.periodic:
        delta -= window.side * np.round(delta / window.side)
    return np.sqrt(np.sum(delta * delta, axis=-1))


# ── Points and actions ──────────────────────────────────────────────

@dataclass(frozen=True)
class MarkedPoint:
    pos: tuple
    mark: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "pos", tuple(float(c) for c in self.pos))
        if any(not math.isfinite(c) for c in self.pos):
            raise ValueError(f"Non-finite coordinate in {self.pos}")
        if self.mark is not None:
            if not self.mark >= 0:
                raise ValueError(f"Mark must be non-negative, got {self.mark}")
            object.__setattr__(self, "mark", float(self.mark))


@dataclass(frozen=True)
class Birth:
    point: MarkedPoint


@dataclass(frozen=True)
class Death:
    point_id: int


# ── Configuration ───────────────────────────────────────────────────

class Configuration:
    """Finite marked point set in a window with a uniform-grid index.

    Single writer. Snapshots handed to readers are taken with copy().
    """

    def __init__(self, window, cell_size=None, points=()):
        self.window = window
        if cell_size is None or not cell_size > 0:
            cell_size = window.side / DEFAULT_GRID_DIVISIONS
        self.cells_per_axis = max(1, int(math.floor(window.side / cell_size)))
        self.cell_width = window.side / self.cells_per_axis

        self._points = {}
        self._occupied = set()
        self._index = {}
        self._ids = []
        self._slot = {}
        self._next_id = 0

        for point in points:
            self.insert(point)

    # ── basic access ───────────────────────────────────────────────

    def __len__(self):
        return len(self._points)

    def __contains__(self, point_id):
        return point_id in self._points

    def __iter__(self):
        for pid in self.ids():
            yield self._points[pid]

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.window == other.window and self._point_multiset() == other._point_multiset()

    def __repr__(self):
        return f"Configuration(n={len(self)}, window={self.window})"

    def _point_multiset(self):
        return sorted((p.pos, -1.0 if p.mark is None else p.mark) for p in self._points.values())

    def ids(self):
        return sorted(self._points)

    def point(self, point_id):
        try:
            return self._points[point_id]
        except KeyError:
            raise KeyError(f"No point with id {point_id}") from None

    def items(self):
        return [(pid, self._points[pid]) for pid in self.ids()]

    def positions(self):
        """(n, d) array of positions, ordered by point id."""
        if not self._points:
            return np.empty((0, self.window.dim))
        return np.array([self._points[pid].pos for pid in self.ids()], dtype=float)

    def marks(self):
        return np.array([np.nan if p.mark is None else p.mark for p in self], dtype=float)

    def has_position(self, pos):
        return tuple(float(c) for c in pos) in self._occupied

    def random_id(self, rng):
        if not self._ids:
            raise ValueError("Cannot pick a point from an empty configuration")
        return self._ids[int(rng.integers(len(self._ids)))]

    # ── mutation ───────────────────────────────────────────────────

    def insert(self, point, point_id=None):
        """Add a point and return its id."""
        if not self.window.contains(point.pos):
            raise ValueError(f"Point {point.pos} lies outside the window [0, {self.window.side})^{self.window.dim}")
        if point.pos in self._occupied:
            raise ValueError(f"Duplicate position {point.pos}")
        if point_id is None:
            point_id = self._next_id
        elif point_id in self._points:
            raise ValueError(f"Point id {point_id} already in use")
        self._next_id = max(self._next_id, point_id + 1)

        self._points[point_id] = point
        self._occupied.add(point.pos)
        self._index.setdefault(self.cell_of(point.pos), set()).add(point_id)
        self._slot[point_id] = len(self._ids)
        self._ids.append(point_id)
        return point_id

    def remove(self, point_id):
        """Remove a point by id and return it."""
        point = self.point(point_id)
        del self._points[point_id]
        self._occupied.discard(point.pos)
        cell = self.cell_of(point.pos)
        members = self._index[cell]
        members.discard(point_id)
        if not members:
            del self._index[cell]
        slot = self._slot.pop(point_id)
        last = self._ids.pop()
        if last != point_id:
            self._ids[slot] = last
            self._slot[last] = slot
        return point

    def copy(self):
        clone = Configuration.__new__(Configuration)
        clone.window = self.window
        clone.cells_per_axis = self.cells_per_axis
        clone.cell_width = self.cell_width
        clone._points = dict(self._points)
        clone._occupied = set(self._occupied)
        clone._index = {cell: set(members) for cell, members in self._index.items()}
        clone._ids = list(self._ids)
        clone._slot = dict(self._slot)
        clone._next_id = self._next_id
        return clone

    def with_point(self, point):
        """Copy of this configuration with one extra point."""
        clone = self.copy()
        clone.insert(point)
        return clone

    # ── grid index ─────────────────────────────────────────────────

    def cell_of(self, pos):
        m = self.cells_per_axis
        return tuple(min(m - 1, int(c / self.cell_width)) for c in pos)

    def index_snapshot(self):
        return {cell: sorted(members) for cell, members in self._index.items()}

    def rebuilt_index(self):
        rebuilt = {}
        for pid, point in self._points.items():
            rebuilt.setdefault(self.cell_of(point.pos), []).append(pid)
        return {cell: sorted(members) for cell, members in rebuilt.items()}

    def _cells_within(self, pos, r):
        m = self.cells_per_axis
        reach = int(math.ceil(r / self.cell_width)) if r > 0 else 0
        home = self.cell_of(self.window.wrap(pos) if self.window.periodic else pos)
        axes = []
        for c in home:
            if self.window.periodic:
                if 2 * reach + 1 >= m:
                    axes.append(range(m))
                else:
                    axes.append(sorted({(c + k) % m for k in range(-reach, reach + 1)}))
            else:
                axes.append(range(max(0, c - reach), min(m, c + reach + 1)))
        return itertools.product(*axes)

    def neighbors_within(self, x, r):
        """Ids of points y with distance(x, y) <= r, sorted by id."""
        if r < 0:
            raise ValueError(f"Radius must be non-negative, got {r}")
        if not self._points:
            return []
        found = []
        if r >= self.window.max_distance:
            candidates = self._points.keys()
        else:
            candidates = (pid for cell in self._cells_within(x, r)
                          for pid in self._index.get(cell, ()))
        for pid in candidates:
            if self.window.distance(x, self._points[pid].pos) <= r:
                found.append(pid)
        found.sort()
        return found

    def nearest_distance(self, x, exclude=None):
        """Distance from x to the closest point (inf for an empty set)."""
        best = math.inf
        radius = self.cell_width
        while True:
            for pid in self.neighbors_within(x, min(radius, self.window.max_distance)):
                if pid == exclude:
                    continue
                best = min(best, self.window.distance(x, self._points[pid].pos))
            if best <= radius or radius >= self.window.max_distance:
                return best
            radius *= 2


def neighbors_within(config, x, r):
    """Exactly the points within distance r of x, ordered by id."""
    return config.neighbors_within(x, r)


def apply_delta(config, action):
    """Apply a birth or death to the configuration (in place) and return it."""
    if isinstance(action, Birth):
        config.insert(action.point)
    elif isinstance(action, Death):
        config.remove(action.point_id)
    else:
        raise TypeError(f"Unknown action: {action!r}")
    return config
