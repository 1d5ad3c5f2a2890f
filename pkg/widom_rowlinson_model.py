"""Widom–Rowlinson model — interaction through newly covered volume.

h(x, gamma) = |L(gamma + x)| - |L(gamma)|, where L is the union of balls
B(y, R_y). Radii are fixed or drawn i.i.d. as marks from a bounded
distribution. d = 1 uses exact interval arithmetic, d = 2 a midpoint grid
over the bounding box of B(x, R_x).
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from base_model import BaseModel
from geometry import ball_volume

RADIUS_KINDS = ("fixed", "uniform", "discrete")
DEFAULT_QUAD_DIVISIONS = 200


# ── Radius distribution ────────────────────────────────────────────

@dataclass(frozen=True)
class RadiusDistribution:
    """Distribution of ball radii: fixed(R), uniform(r_min, r_max) or discrete."""

    kind: str
    values: tuple
    weights: tuple | None = None

    def __post_init__(self):
        if self.kind not in RADIUS_KINDS:
            raise ValueError(f"Unknown radius distribution: {self.kind!r} (expected one of {RADIUS_KINDS})")
        values = tuple(float(v) for v in self.values)
        if not values or any(not (v >= 0 and math.isfinite(v)) for v in values):
            raise ValueError(f"Radii must be finite and >= 0, got {self.values}")
        object.__setattr__(self, "values", values)

        if self.kind == "fixed" and len(values) != 1:
            raise ValueError("fixed radius distribution takes exactly one value")
        if self.kind == "uniform" and (len(values) != 2 or not values[0] < values[1]):
            raise ValueError(f"uniform radius distribution needs r_min < r_max, got {values}")
        if self.kind == "discrete":
            weights = self.weights if self.weights is not None else [1.0] * len(values)
            weights = np.asarray(weights, dtype=float)
            if weights.shape != (len(values),) or np.any(weights < 0) or weights.sum() <= 0:
                raise ValueError(f"discrete radius weights must be non-negative, one per value, got {self.weights}")
            object.__setattr__(self, "weights", tuple(float(w) for w in weights / weights.sum()))

    @classmethod
    def fixed(cls, radius):
        return cls("fixed", (radius,))

    @classmethod
    def uniform(cls, r_min, r_max):
        return cls("uniform", (r_min, r_max))

    @classmethod
    def discrete(cls, values, weights=None):
        return cls("discrete", tuple(values), None if weights is None else tuple(weights))

    @property
    def is_fixed(self):
        return self.kind == "fixed"

    @property
    def r_min(self):
        return min(self.values)

    @property
    def r_max(self):
        return max(self.values)

    def sample(self, rng):
        if self.kind == "fixed":
            return self.values[0]
        if self.kind == "uniform":
            lo, hi = self.values
            return float(lo + (hi - lo) * rng.random())
        return float(self.values[int(rng.choice(len(self.values), p=self.weights))])

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "fixed":
            return (r >= self.values[0]).astype(float)
        if self.kind == "uniform":
            lo, hi = self.values
            return np.clip((r - lo) / (hi - lo), 0.0, 1.0)
        values = np.asarray(self.values)
        weights = np.asarray(self.weights)
        return np.array([weights[values <= v].sum() for v in np.atleast_1d(r)]).reshape(r.shape)

    def to_dict(self):
        if self.kind == "fixed":
            return {"radius": self.values[0]}
        if self.kind == "uniform":
            return {"radius_distribution": "uniform", "r_min": self.values[0], "r_max": self.values[1]}
        return {"radius_distribution": "discrete", "values": list(self.values), "weights": list(self.weights)}


@dataclass(frozen=True)
class WidomRowlinsonSpec:
    z: float
    beta: float
    radius: RadiusDistribution
    quad_resolution: float | None = None

    def __post_init__(self):
        if self.quad_resolution is not None and not self.quad_resolution > 0:
            raise ValueError(f"quad_resolution must be > 0, got {self.quad_resolution}")


# ── Geometry helpers ───────────────────────────────────────────────

def ball_intersection_volume(d, r1, r2, t):
    """|B(0, r1) ∩ B(t e, r2)| for d in {1, 2} (closed form)."""
    if d == 1:
        return max(0.0, min(r1, t + r2) - max(-r1, t - r2))
    if d != 2:
        raise ValueError(f"Closed-form intersection only for d in (1, 2), got {d}")
    if t >= r1 + r2:
        return 0.0
    if t <= abs(r1 - r2):
        return math.pi * min(r1, r2) ** 2
    a1 = math.acos((t * t + r1 * r1 - r2 * r2) / (2 * t * r1))
    a2 = math.acos((t * t + r2 * r2 - r1 * r1) / (2 * t * r2))
    kite = 0.5 * math.sqrt(max(0.0, (-t + r1 + r2) * (t + r1 - r2) * (t - r1 + r2) * (t + r1 + r2)))
    return r1 * r1 * a1 + r2 * r2 * a2 - kite


def merged_length(intervals):
    """Total length of a union of closed intervals."""
    total = 0.0
    current_lo = current_hi = None
    for lo, hi in sorted(intervals):
        if current_hi is None or lo > current_hi:
            if current_hi is not None:
                total += current_hi - current_lo
            current_lo, current_hi = lo, hi
        else:
            current_hi = max(current_hi, hi)
    if current_hi is not None:
        total += current_hi - current_lo
    return total


@lru_cache(maxsize=64)
def _disk_grid(radius, divisions):
    """Midpoints of a divisions x divisions grid over [-r, r]^2 that fall inside the disk."""
    step = 2 * radius / divisions
    axis = -radius + (np.arange(divisions) + 0.5) * step
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    inside = gx * gx + gy * gy <= radius * radius
    return np.column_stack([gx[inside], gy[inside]]), step


def radius_of(spec, point):
    if spec.radius.is_fixed:
        return spec.radius.values[0]
    if point.mark is None:
        raise ValueError(f"Widom-Rowlinson with random radii needs a radius mark on {point.pos}")
    return point.mark


def wr_area_delta_with_error(spec, x, config):
    """(uncovered volume of B(x, R_x), error bound)."""
    window = config.window
    r = radius_of(spec, x)
    full = ball_volume(window.dim, r)
    if r == 0:
        return 0.0, 0.0

    neighbors = []
    for pid in config.neighbors_within(x.pos, r + spec.radius.r_max):
        y = config.point(pid)
        r_y = radius_of(spec, y)
        if r_y > 0:
            neighbors.append((window.displacement(y.pos, x.pos), r_y))
    if not neighbors:
        return full, 0.0

    if window.dim == 1:
        shifts = (-window.side, 0.0, window.side) if window.periodic else (0.0,)
        pieces = []
        for (delta,), r_y in neighbors:
            for shift in shifts:
                lo = max(-r, delta + shift - r_y)
                hi = min(r, delta + shift + r_y)
                if lo < hi:
                    pieces.append((lo, hi))
        return max(0.0, 2 * r - merged_length(pieces)), 0.0

    h = spec.quad_resolution or r / DEFAULT_QUAD_DIVISIONS
    divisions = max(1, int(math.ceil(2 * r / h)))
    points, step = _disk_grid(r, divisions)
    uncovered = np.ones(len(points), dtype=bool)
    perimeter = 2 * math.pi * r
    for delta, r_y in neighbors:
        rel = points - np.asarray(delta)
        if window.periodic:
            rel -= window.side * np.round(rel / window.side)
        uncovered &= np.einsum("ij,ij->i", rel, rel) > r_y * r_y
        perimeter += 2 * math.pi * min(r_y, r)
        if not uncovered.any():
            return 0.0, 0.0
    area = full * np.count_nonzero(uncovered) / len(points)
    return float(area), math.sqrt(2) * step * perimeter


def wr_area_delta(spec, x, config):
    return wr_area_delta_with_error(spec, x, config)[0]


# ── Model ──────────────────────────────────────────────────────────

class WidomRowlinsonModel(BaseModel):
    """Widom–Rowlinson model with fixed or random radii."""

    KIND = "widom_rowlinson"
    SUPPORTED_DIMS = (1, 2)

    def __init__(self, spec, dim):
        super().__init__(spec.z, spec.beta, dim)
        self.spec = spec

    @classmethod
    def from_section(cls, section, dim):
        kind = section.get("radius_distribution", "fixed")
        if kind == "fixed":
            if "radius" not in section:
                raise ValueError("widom_rowlinson requires radius (or radius_distribution)")
            radius = RadiusDistribution.fixed(section["radius"])
        elif kind == "uniform":
            radius = RadiusDistribution.uniform(section["r_min"], section["r_max"])
        elif kind == "discrete":
            radius = RadiusDistribution.discrete(section["values"], section.get("weights"))
        else:
            raise ValueError(f"Unknown radius_distribution: {kind!r}")
        spec = WidomRowlinsonSpec(
            z=float(section["z"]),
            beta=float(section.get("beta", 1.0)),
            radius=radius,
            quad_resolution=section.get("quad_resolution"),
        )
        return cls(spec, dim)

    def to_section(self):
        section = {"kind": self.KIND, "z": self.z, "beta": self.beta}
        section.update(self.spec.radius.to_dict())
        section["quad_resolution"] = self.quad_resolution
        return section

    @property
    def quad_resolution(self):
        return self.spec.quad_resolution or self.spec.radius.r_max / DEFAULT_QUAD_DIVISIONS

    @property
    def marked(self):
        return not self.spec.radius.is_fixed

    def sample_mark(self, rng):
        if self.spec.radius.is_fixed:
            return None
        return self.spec.radius.sample(rng)

    def check_window(self, window):
        super().check_window(window)
        if window.periodic and 4 * self.spec.radius.r_max > window.side:
            raise ValueError(
                f"Periodic window side {window.side} must be at least 4 * r_max = "
                f"{4 * self.spec.radius.r_max} for minimum-image ball overlaps"
            )

    def local_energy(self, x, config):
        return wr_area_delta(self.spec, x, config)

    def local_energy_with_error(self, x, config):
        return wr_area_delta_with_error(self.spec, x, config)

    def global_energy(self, config):
        """|L(gamma)| as the telescoping sum of covered-volume increments in id order."""
        partial = self.new_configuration(config.window)
        terms = []
        for _, point in config.items():
            terms.append(wr_area_delta(self.spec, point, partial))
            partial.insert(point)
        return math.fsum(terms)

    def interaction_cutoff(self, window):
        return 2 * self.spec.radius.r_max

    def upper_stability(self, window):
        return self.z

    def lower_stability(self):
        return self.z * math.exp(-self.beta * ball_volume(self.dim, self.spec.radius.r_max))

    def describe(self):
        info = super().describe()
        info.update(self.to_section())
        return info
