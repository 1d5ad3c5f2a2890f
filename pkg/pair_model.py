"""Pair-potential Gibbs models — Strauss, hard core, Riesz, Lennard-Jones, tabulated.

lambda*(x, gamma) = z * exp(-beta * sum_{y in gamma} Phi(|x - y|)). Under a
periodic window every pair distance is the minimum-image distance.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from base_model import BaseModel, HardCoreConflict, SingularPotentialError
from geometry import tuple_pair_distances

PAIR_KINDS = ("strauss", "hard_core", "riesz", "lennard_jones", "tabulated")
CUTOFF_TOLERANCE = 1e-12


@dataclass(frozen=True)
class PairPotentialSpec:
    kind: str
    z: float
    beta: float
    radius: float | None = None
    s: float | None = None
    A: float | None = None
    B: float | None = None
    a1: float | None = None
    a2: float | None = None
    r_grid: tuple | None = None
    phi_grid: tuple | None = None
    cutoff: float | None = None

    def __post_init__(self):
        if self.kind not in PAIR_KINDS:
            raise ValueError(f"Unknown pair potential kind: {self.kind!r} (expected one of {PAIR_KINDS})")
        if not (self.z > 0 and math.isfinite(self.z)):
            raise ValueError(f"z must be > 0, got {self.z}")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.cutoff is not None and not self.cutoff >= 0:
            raise ValueError(f"cutoff must be >= 0, got {self.cutoff}")

        if self.kind in ("strauss", "hard_core"):
            if self.radius is None or not self.radius >= 0:
                raise ValueError(f"{self.kind} requires radius >= 0, got {self.radius}")
        elif self.kind == "riesz":
            if self.s is None or not self.s > 0:
                raise ValueError(f"riesz requires s > 0, got {self.s}")
        elif self.kind == "lennard_jones":
            for name in ("A", "B", "a1", "a2"):
                if getattr(self, name) is None:
                    raise ValueError(f"lennard_jones requires parameter {name}")
            if not self.A > 0 or not self.B >= 0:
                raise ValueError(f"lennard_jones requires A > 0 and B >= 0, got A={self.A}, B={self.B}")
            if not self.a1 > self.a2 > 0:
                raise ValueError(f"lennard_jones requires a1 > a2 > 0, got a1={self.a1}, a2={self.a2}")
        elif self.kind == "tabulated":
            if self.r_grid is None or self.phi_grid is None:
                raise ValueError("tabulated potential requires r_grid and phi_grid")
            r = np.asarray(self.r_grid, dtype=float)
            phi = np.asarray(self.phi_grid, dtype=float)
            if r.ndim != 1 or r.shape != phi.shape or len(r) < 2:
                raise ValueError("tabulated r_grid and phi_grid must be 1-D of equal length >= 2")
            if r[0] < 0 or np.any(np.diff(r) <= 0):
                raise ValueError("tabulated r_grid must be non-negative and strictly increasing")
            if not np.all(np.isfinite(phi)):
                raise ValueError("tabulated phi_grid must be finite")
            object.__setattr__(self, "r_grid", tuple(float(v) for v in r))
            object.__setattr__(self, "phi_grid", tuple(float(v) for v in phi))

    def check_dimension(self, dim):
        """Integrability constraints that depend on the dimension."""
        if self.kind == "riesz" and not self.s > dim:
            raise ValueError(
                f"riesz requires s > d for integrability, got s={self.s}, d={dim}; "
                f"use the knn model for Coulomb-type interactions"
            )
        if self.kind == "lennard_jones" and not self.a2 > dim:
            raise ValueError(f"lennard_jones requires a1 > a2 > d, got a2={self.a2}, d={dim}")

    @property
    def nonnegative(self):
        if self.kind == "lennard_jones":
            return self.B == 0
        if self.kind == "tabulated":
            return min(self.phi_grid) >= 0
        return True

    def to_dict(self):
        fields = {"kind": self.kind, "z": self.z, "beta": self.beta}
        if self.cutoff is not None:
            fields["cutoff"] = self.cutoff
        if self.kind in ("strauss", "hard_core"):
            fields["radius"] = self.radius
        elif self.kind == "riesz":
            fields["s"] = self.s
        elif self.kind == "lennard_jones":
            fields.update(A=self.A, B=self.B, a1=self.a1, a2=self.a2)
        else:
            fields.update(r=list(self.r_grid), phi=list(self.phi_grid))
        return fields


# ── Potential evaluation ───────────────────────────────────────────

def effective_cutoff(spec):
    """Interaction radius; Phi is 0 beyond it."""
    if spec.kind in ("strauss", "hard_core"):
        natural = spec.radius
    elif spec.kind == "riesz":
        natural = (1.0 / CUTOFF_TOLERANCE) ** (1.0 / spec.s)
    elif spec.kind == "lennard_jones":
        # |Phi(r)| <= (A + B) r^-a2 once r >= 1
        natural = max(1.0, ((spec.A + spec.B) / CUTOFF_TOLERANCE) ** (1.0 / spec.a2))
    else:
        natural = spec.r_grid[-1]
    if spec.cutoff is None:
        return natural
    if spec.kind in ("strauss", "hard_core"):
        return min(natural, spec.cutoff)
    return spec.cutoff


def phi_eval(spec, r):
    if r < 0:
        raise ValueError(f"Distance must be non-negative, got {r}")
    if spec.cutoff is not None and r > spec.cutoff:
        return 0.0

    if spec.kind == "strauss":
        return 1.0 if r <= spec.radius else 0.0
    if spec.kind == "hard_core":
        return math.inf if r <= spec.radius else 0.0
    if spec.kind == "tabulated":
        if r > spec.r_grid[-1]:
            return 0.0
        return float(np.interp(r, spec.r_grid, spec.phi_grid))

    if r == 0:
        raise SingularPotentialError(f"{spec.kind} potential is singular at r = 0")
    if spec.kind == "riesz":
        return r ** (-spec.s)
    return spec.A * r ** (-spec.a1) - spec.B * r ** (-spec.a2)


def pair_weight(spec, r):
    """exp(-beta * Phi(r)), with an infinite energy mapped to 0."""
    phi = phi_eval(spec, r)
    if phi == math.inf:
        return 0.0
    return math.exp(-spec.beta * phi)


def pair_weights(spec, r):
    """Vectorised pair_weight over an array of distances."""
    r = np.asarray(r, dtype=float)
    if spec.kind in ("strauss", "hard_core"):
        inside = r <= spec.radius
        if spec.cutoff is not None:
            inside &= r <= spec.cutoff
        close = 0.0 if spec.kind == "hard_core" else math.exp(-spec.beta)
        return np.where(inside, close, 1.0)
    return np.vectorize(lambda d: pair_weight(spec, d), otypes=[float])(r)


def pair_local_energy(spec, x, config):
    """sum_{y in gamma} Phi(|x - y|) over neighbours within the cutoff."""
    cutoff = effective_cutoff(spec)
    terms = []
    for pid in config.neighbors_within(x.pos, cutoff):
        phi = phi_eval(spec, config.window.distance(x.pos, config.point(pid).pos))
        if phi == math.inf:
            return math.inf
        terms.append(phi)
    return math.fsum(terms)


# ── Model ──────────────────────────────────────────────────────────

class PairModel(BaseModel):
    """Gibbs model with a pair potential Phi."""

    KIND = "pair"

    def __init__(self, spec, dim):
        super().__init__(spec.z, spec.beta, dim)
        spec.check_dimension(dim)
        self.spec = spec
        self.cutoff = effective_cutoff(spec)

    @classmethod
    def from_section(cls, section, dim):
        kind = section["kind"]
        spec = PairPotentialSpec(
            kind=kind,
            z=float(section["z"]),
            beta=float(section.get("beta", 1.0)),
            radius=section.get("radius"),
            s=section.get("s"),
            A=section.get("A"),
            B=section.get("B"),
            a1=section.get("a1"),
            a2=section.get("a2"),
            r_grid=tuple(section["r"]) if "r" in section else None,
            phi_grid=tuple(section["phi"]) if "phi" in section else None,
            cutoff=section.get("cutoff"),
        )
        return cls(spec, dim)

    def to_section(self):
        return self.spec.to_dict()

    def describe(self):
        info = super().describe()
        info.update(self.spec.to_dict())
        info["cutoff"] = self.cutoff
        return info

    def phi(self, r):
        return phi_eval(self.spec, r)

    def local_energy(self, x, config):
        return pair_local_energy(self.spec, x, config)

    def global_energy(self, config):
        terms = []
        points = config.items()
        for (_, a), (_, b) in combinations(points, 2):
            phi = phi_eval(self.spec, config.window.distance(a.pos, b.pos))
            if phi == math.inf:
                return math.inf
            terms.append(phi)
        return math.fsum(terms)

    def interaction_cutoff(self, window):
        return self.cutoff

    def grid_cell_size(self, window):
        if self.cutoff <= 0:
            return window.side / self.GRID_FALLBACK_DIVISIONS
        return min(self.cutoff, window.side)

    def upper_stability(self, window):
        return self.z if self.spec.nonnegative else None

    def papangelou_ratio(self, x, config, y):
        """Exactly exp(-beta * Phi(|x - y|)), whatever the configuration."""
        if self.papangelou(x, config) == 0.0:
            raise HardCoreConflict(f"lambda*(x, gamma) = 0 at x={x.pos}; ratio undefined")
        return pair_weight(self.spec, config.window.distance(x.pos, y.pos))

    def tuple_weights(self, window, positions):
        """exp(-beta H) for each tuple in an (m, n, d) stack, plus the pair distances."""
        distances = tuple_pair_distances(window, positions)
        return np.prod(pair_weights(self.spec, distances), axis=1), distances
