import logging
import math
from abc import ABC, abstractmethod

from geometry import SUPPORTED_DIMS, Configuration


class SingularPotentialError(ValueError):
    """Potential evaluated at r = 0 where it has a singularity."""


class HardCoreConflict(ArithmeticError):
    """Insertion ratio requested at a location where lambda*(x, gamma) = 0."""


class BaseModel(ABC):
    """Base class for all Gibbs models driven by a Papangelou intensity.

    lambda*(x, gamma) = z * exp(-beta * h(x, gamma)); an infinite local energy
    maps to lambda* = 0. Models are immutable after construction.
    """

    KIND = "base"
    SUPPORTED_DIMS = SUPPORTED_DIMS
    GRID_FALLBACK_DIVISIONS = 16

    def __init__(self, z, beta, dim):
        if not (z > 0 and math.isfinite(z)):
            raise ValueError(f"Activity z must be a positive finite number, got {z}")
        if not (beta >= 0 and math.isfinite(beta)):
            raise ValueError(f"Inverse temperature beta must be >= 0, got {beta}")
        if dim not in self.SUPPORTED_DIMS:
            raise ValueError(
                f"{self.__class__.__name__} supports dim in {self.SUPPORTED_DIMS}, got {dim}"
            )
        self.z = float(z)
        self.beta = float(beta)
        self.dim = int(dim)
        self.logger = logging.getLogger("Models")

    @classmethod
    @abstractmethod
    def from_section(cls, section, dim):
        """Build the model from a validated config section (dict)."""
        pass

    @abstractmethod
    def to_section(self):
        """Fully resolved config section, echoed into run manifests."""
        pass

    @abstractmethod
    def local_energy(self, x, config):
        """h(x, gamma) for a point x not in gamma. May be math.inf."""
        pass

    @abstractmethod
    def global_energy(self, config):
        """H(gamma) computed from scratch."""
        pass

    @abstractmethod
    def interaction_cutoff(self, window):
        """Radius beyond which points do not interact, or None if adaptive."""
        pass

    @abstractmethod
    def upper_stability(self, window):
        """Constant C with lambda*(x, gamma) <= C, or None if unbounded."""
        pass

    # ── Papangelou intensity ───────────────────────────────────────

    def papangelou(self, x, config):
        h = self.local_energy(x, config)
        if h == math.inf:
            return 0.0
        if self.beta == 0.0:
            return self.z
        return self.z * math.exp(-self.beta * h)

    def papangelou_ratio(self, x, config, y):
        """lambda*(x, gamma + y) / lambda*(x, gamma) via the energy difference."""
        h_without = self.local_energy(x, config)
        if h_without == math.inf:
            raise HardCoreConflict(f"lambda*(x, gamma) = 0 at x={x.pos}; ratio undefined")
        h_with = self.local_energy(x, config.with_point(y))
        if h_with == math.inf:
            return 0.0
        if self.beta == 0.0:
            return 1.0
        return math.exp(-self.beta * (h_with - h_without))

    # ── Marks and grid ─────────────────────────────────────────────

    @property
    def marked(self):
        return False

    def sample_mark(self, rng):
        return None

    def typical_spacing(self):
        return self.z ** (-1.0 / self.dim)

    def grid_cell_size(self, window):
        cutoff = self.interaction_cutoff(window)
        if cutoff is None or not cutoff > 0:
            cutoff = min(self.typical_spacing(), window.side / self.GRID_FALLBACK_DIVISIONS)
        return min(cutoff, window.side)

    def check_window(self, window):
        if window.dim != self.dim:
            raise ValueError(f"Model dim {self.dim} does not match window dim {window.dim}")

    def new_configuration(self, window, points=()):
        self.check_window(window)
        return Configuration(window, cell_size=self.grid_cell_size(window), points=points)

    def describe(self):
        return {"kind": self.KIND, "z": self.z, "beta": self.beta, "dim": self.dim}

    def __repr__(self):
        params = ", ".join(f"{k}={v}" for k, v in self.describe().items())
        return f"{self.__class__.__name__}({params})"
