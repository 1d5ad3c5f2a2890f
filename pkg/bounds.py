"""Bounds — closed-form non-hyperuniformity bounds, constants and stability envelopes.

Every function is pure. Lower bounds on the asymptotic scaled variance
Var(N_Lambda) / |Lambda| are available in closed form for pair potentials
(given the first two moments of lambda*), for the Strauss process and for
the fixed-radius Widom–Rowlinson model.

Usage:
    from bounds import build_bounds_report, c_d_constant, beta_critical

    print(c_d_constant(2))                  # 1/36
    print(beta_critical(z=1.0, K=1.0, dim=2))
    report = build_bounds_report(model, window, lam=0.93)
    print(report.to_text())
"""

import json
import logging
import math
from dataclasses import dataclass, field

from scipy.integrate import quad
from scipy.optimize import bisect

from base_model import SingularPotentialError
from geometry import SUPPORTED_DIMS, ball_volume, unit_ball_volume
from knn_model import KnnModel
from pair_model import PairModel, effective_cutoff, phi_eval
from voronoi_model import CappedVolume, VoronoiModel
from widom_rowlinson_model import WidomRowlinsonModel

logger = logging.getLogger("Bounds")

BOUND_NAMES = (
    "strauss_bound",
    "pair_bound",
    "wr_bound",
    "c_d",
    "beta_c",
    "integrability",
    "bernoulli_p",
    "knn_envelope",
    "voronoi_envelope",
    "wr_envelope",
)

CONE_ANGLE = math.pi / 12
QUAD_LIMIT = 200
DECADES = range(-6, 7)
C_D_TOLERANCE = 1e-13
BETA_C_TOLERANCE = 1e-12


# ── Integrability ──────────────────────────────────────────────────

@dataclass(frozen=True)
class IntegrabilityResult:
    value: float
    error: float
    integrable: bool
    verdict: str


def _divergence(spec, dim):
    if spec.kind == "riesz" and not spec.s > dim:
        return f"riesz r^-s with s={spec.s} <= d={dim}: the tail integral diverges"
    if spec.kind == "lennard_jones" and not spec.a2 > dim:
        return f"lennard_jones with a2={spec.a2} <= d={dim}: the tail integral diverges"
    return None


def _upper_limit(spec):
    if spec.kind in ("riesz", "lennard_jones") and spec.cutoff is None:
        return math.inf
    return effective_cutoff(spec)


def _breakpoints(spec, lower, upper):
    points = {lower}
    if spec.kind == "tabulated":
        points.update(spec.r_grid)
    if spec.kind in ("strauss", "hard_core"):
        points.add(spec.radius)
    points.update(10.0 ** k for k in DECADES)
    points = sorted(p for p in points if lower <= p < upper)
    points.append(upper)
    return points


def integrability_integrand(spec, dim, r):
    """|1 - e^{-beta Phi(r)}| * d |B_d| r^{d-1}, the radial integrand of the integrability integral."""
    surface = dim * unit_ball_volume(dim)
    if r == 0.0 and dim > 1:
        return 0.0
    try:
        phi = phi_eval(spec, r)
    except SingularPotentialError:
        # singular potentials blow up to +inf at the origin, where the factor tends to 1
        return surface * r ** (dim - 1)
    return abs(-math.expm1(-spec.beta * phi)) * surface * r ** (dim - 1)


def integrability_integral(spec, dim, delta=0.0, rtol=1e-8):
    """int_{|y| >= delta} |1 - exp(-beta Phi(|y|))| dy as a radial quadrature.

    The integrand |1 - e^{-beta Phi(r)}| * d |B_d| r^{d-1} is integrated piecewise
    between delta, the potential's breakpoints and the decades 10^k, with an
    infinite last segment for untruncated power-law tails.
    """
    if dim not in SUPPORTED_DIMS:
        raise ValueError(f"Unsupported dimension: {dim} (expected one of {SUPPORTED_DIMS})")
    if not delta >= 0:
        raise ValueError(f"Inner cutoff delta must be >= 0, got {delta}")
    if not rtol > 0:
        raise ValueError(f"rtol must be > 0, got {rtol}")

    reason = _divergence(spec, dim)
    if reason is not None:
        logger.info(f"Integrability: {reason}")
        return IntegrabilityResult(value=math.inf, error=math.inf, integrable=False,
                                   verdict=f"non-integrable ({reason})")
    if spec.beta == 0.0:
        return IntegrabilityResult(value=0.0, error=0.0, integrable=True, verdict="integrable")

    def integrand(r):
        return integrability_integrand(spec, dim, r)

    upper = _upper_limit(spec)
    if upper <= delta:
        return IntegrabilityResult(value=0.0, error=0.0, integrable=True, verdict="integrable")

    points = _breakpoints(spec, delta, upper)
    values, errors = [], []
    for a, b in zip(points[:-1], points[1:]):
        if b <= a:
            continue
        value, error = quad(integrand, a, b, epsabs=0.0, epsrel=rtol, limit=QUAD_LIMIT)
        values.append(value)
        errors.append(error)

    value = math.fsum(values)
    error = math.fsum(errors)
    logger.debug(f"Integrability of {spec.kind} (d={dim}, delta={delta}): {value:.12g} +/- {error:.2e}")
    return IntegrabilityResult(value=value, error=error, integrable=True, verdict="integrable")


# ── Variance lower bounds ──────────────────────────────────────────

def pair_bound(lam, m2, integral):
    """lambda^2 / (lambda + m2 * integral), with lambda = E lambda* and m2 = E lambda*^2."""
    if not lam > 0:
        raise ValueError(f"Intensity must be > 0, got {lam}")
    if not m2 >= lam * lam * (1 - 1e-9):
        raise ValueError(f"Second moment m2={m2} must be >= lambda^2={lam * lam}")
    if not (integral >= 0 and math.isfinite(integral)):
        raise ValueError(f"Integral must be finite and >= 0, got {integral}")
    return lam * lam / (lam + m2 * integral)


def strauss_bound(z, beta, R, lam, dim):
    """lambda^2 / (z + z^2 |B(0,R)| (1 - e^{-beta}))."""
    _check_activity(z, beta)
    if not lam > 0:
        raise ValueError(f"Intensity must be > 0, got {lam}")
    return lam * lam / (z - z * z * ball_volume(dim, R) * math.expm1(-beta))


def wr_bound(z, beta, R, dim):
    """e^{-beta |B(0,R)|} / (1 + z e^{beta |B(0,R)|} |B(0,2R)|)."""
    _check_activity(z, beta)
    ball = ball_volume(dim, R)
    return math.exp(-beta * ball) / (1 + z * math.exp(beta * ball) * ball_volume(dim, 2 * R))


def _check_activity(z, beta):
    if not (z > 0 and math.isfinite(z)):
        raise ValueError(f"Activity z must be > 0, got {z}")
    if not (beta >= 0 and math.isfinite(beta)):
        raise ValueError(f"beta must be >= 0, got {beta}")


# ── Voronoi constants ──────────────────────────────────────────────

def c_d_constant(dim):
    """(1/3) (|B_{d-1}| / |B_d|) (sin^{d-1}(pi/12) cos(pi/12) / d + int_0^{pi/12} sin^d)."""
    if dim not in SUPPORTED_DIMS:
        raise ValueError(f"Unsupported dimension: {dim} (expected one of {SUPPORTED_DIMS})")
    integral, _ = quad(lambda t: math.sin(t) ** dim, 0.0, CONE_ANGLE,
                       epsabs=C_D_TOLERANCE, epsrel=C_D_TOLERANCE)
    ratio = unit_ball_volume(dim - 1) / unit_ball_volume(dim)
    cap = math.sin(CONE_ANGLE) ** (dim - 1) * math.cos(CONE_ANGLE) / dim
    return ratio * (cap + integral) / 3


def beta_critical(z, K, dim, tol=BETA_C_TOLERANCE):
    """Unique root of beta = z e^{-beta K} C_d.

    The right side is at most z C_d, so the root lies in [0, z C_d]; the
    residual beta - z e^{-beta K} C_d is increasing with slope <= 1 + z K C_d.
    """
    if not (z > 0 and math.isfinite(z)):
        raise ValueError(f"Activity z must be > 0, got {z}")
    if not (K >= 0 and math.isfinite(K)):
        raise ValueError(f"Volume cap K must be >= 0, got {K}")
    c_d = c_d_constant(dim)
    upper = z * c_d
    if K == 0:
        return upper
    xtol = tol / (2 * (1 + z * K * c_d))
    root = bisect(lambda b: b - z * math.exp(-b * K) * c_d, 0.0, upper, xtol=xtol, maxiter=200)
    logger.debug(f"beta_c(z={z}, K={K}, d={dim}) = {root:.15g}")
    return root


# ── Bernoulli domination ───────────────────────────────────────────

def domination_normalizer(z, C1, delta, eps, dim):
    """Closed form of sum_n C1^n (z s^d)^n / n! e^{-z s^d} = e^{z s^d (C1 - 1)}, s = 2 delta + eps."""
    return math.exp(z * (2 * delta + eps) ** dim * (C1 - 1))


def bernoulli_p(z, beta, C1, C2, delta, eps, dim):
    """Occupancy floor C2 z eps^d e^{-z s^d} / e^{z s^d (C1 - 1)} with s = 2 delta + eps.

    beta enters through the stability constants C1 >= lambda* >= C2; it is
    validated but not used directly.
    """
    _check_activity(z, beta)
    if not C1 >= C2 > 0:
        raise ValueError(f"Stability constants must satisfy C1 >= C2 > 0, got C1={C1}, C2={C2}")
    if not delta >= 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if dim not in SUPPORTED_DIMS:
        raise ValueError(f"Unsupported dimension: {dim} (expected one of {SUPPORTED_DIMS})")
    volume = (2 * delta + eps) ** dim
    return C2 * z * eps ** dim * math.exp(-z * volume) / domination_normalizer(z, C1, delta, eps, dim)


# ── Local stability envelopes ──────────────────────────────────────

def voronoi_envelope(z, beta, K, cell_volume):
    _check_activity(z, beta)
    if not (K >= 0 and cell_volume >= 0):
        raise ValueError(f"K and cell_volume must be >= 0, got K={K}, cell_volume={cell_volume}")
    return z * math.exp(-beta * K), z * math.exp(beta * K) * math.exp(beta * cell_volume)


def knn_envelope(z, beta, k, phi_sup, n_d):
    _check_activity(z, beta)
    if not (phi_sup >= 0 and math.isfinite(phi_sup)):
        raise ValueError(f"phi_sup must be finite and >= 0, got {phi_sup}")
    if not n_d >= 1:
        raise ValueError(f"N_d must be >= 1, got {n_d}")
    spread = beta * (1 + 2 * n_d) * k * phi_sup
    return z * math.exp(-spread), z * math.exp(spread)


def wr_envelope(z, beta, R, dim):
    _check_activity(z, beta)
    return z * math.exp(-beta * ball_volume(dim, R)), z


# ── Report ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class BoundEntry:
    name: str
    value: object
    inputs: dict
    formula: str
    note: str | None = None

    def __post_init__(self):
        if self.name not in BOUND_NAMES:
            raise ValueError(f"Unknown bound name: {self.name!r} (expected one of {BOUND_NAMES})")
        if self.value is None:
            if not self.note:
                raise ValueError(f"Entry {self.name} without a value needs a note")
            return
        values = self.value if isinstance(self.value, tuple) else (self.value,)
        if any(not (math.isfinite(v) and v >= 0) for v in values):
            raise ValueError(f"Entry {self.name} has a non-finite or negative value {self.value}")
        if isinstance(self.value, tuple) and not self.value[0] <= self.value[1]:
            raise ValueError(f"Envelope {self.name} is not ordered: {self.value}")

    def value_text(self):
        if self.value is None:
            return "n/a"
        if isinstance(self.value, tuple):
            return f"[{self.value[0]:.10g}, {self.value[1]:.10g}]"
        return f"{self.value:.10g}"

    def to_dict(self):
        value = list(self.value) if isinstance(self.value, tuple) else self.value
        entry = {"name": self.name, "value": value, "inputs": self.inputs, "formula": self.formula}
        if self.note:
            entry["note"] = self.note
        return entry


@dataclass
class BoundsReport:
    entries: dict = field(default_factory=dict)

    def add(self, name, value, inputs, formula, note=None):
        if name in self.entries:
            raise ValueError(f"Bound {name!r} already in the report")
        entry = BoundEntry(name=name, value=value, inputs=dict(inputs), formula=formula, note=note)
        self.entries[name] = entry
        return entry

    def __getitem__(self, name):
        return self.entries[name]

    def __contains__(self, name):
        return name in self.entries

    def value(self, name):
        return self.entries[name].value

    def to_dict(self):
        return {"entries": [entry.to_dict() for entry in self.entries.values()]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self):
        if not self.entries:
            return "(no bounds)"
        name_width = max(len(name) for name in self.entries)
        value_width = max(len(entry.value_text()) for entry in self.entries.values())
        lines = []
        for name, entry in self.entries.items():
            line = f"{name:<{name_width}}  {entry.value_text():>{value_width}}  {entry.formula}"
            if entry.note:
                line += f"  ({entry.note})"
            lines.append(line)
        return "\n".join(lines)


# ── Report assembly ────────────────────────────────────────────────

def default_epsilon(window, delta):
    """Largest cell side <= delta that tiles the window."""
    return window.side / math.ceil(window.side / delta)


def build_bounds_report(model, window=None, lam=None, m2=None, n_d=None,
                        cell_volume=None, delta=None, eps=None):
    """Every bound that applies to the model, given whatever estimates are at hand."""
    report = BoundsReport()
    z, beta, dim = model.z, model.beta, model.dim

    if isinstance(model, PairModel):
        spec = model.spec
        result = integrability_integral(spec, dim, delta=delta or 0.0)
        inputs = {"kind": spec.kind, "beta": beta, "dim": dim, "delta": delta or 0.0}
        if result.integrable:
            report.add("integrability", result.value, {**inputs, "error": result.error},
                       "int |1 - exp(-beta Phi(|y|))| dy")
        else:
            report.add("integrability", None, inputs, "int |1 - exp(-beta Phi(|y|))| dy", note=result.verdict)
        if spec.kind == "strauss" and lam is not None:
            report.add("strauss_bound", strauss_bound(z, beta, spec.radius, lam, dim),
                       {"z": z, "beta": beta, "R": spec.radius, "lambda": lam, "dim": dim},
                       "lambda^2 / (z + z^2 |B(0,R)| (1 - e^-beta))")
        if lam is not None and m2 is not None and result.integrable:
            report.add("pair_bound", pair_bound(lam, m2, result.value),
                       {"lambda": lam, "m2": m2, "integral": result.value},
                       "lambda^2 / (lambda + m2 * integral)")

    elif isinstance(model, WidomRowlinsonModel):
        r_max = model.spec.radius.r_max
        if model.spec.radius.is_fixed:
            report.add("wr_bound", wr_bound(z, beta, r_max, dim),
                       {"z": z, "beta": beta, "R": r_max, "dim": dim},
                       "e^(-beta |B(0,R)|) / (1 + z e^(beta |B(0,R)|) |B(0,2R)|)")
        lower, upper = wr_envelope(z, beta, r_max, dim)
        report.add("wr_envelope", (lower, upper), {"z": z, "beta": beta, "R_max": r_max, "dim": dim},
                   "z e^(-beta |B(0,R)|) <= lambda* <= z")
        delta = 2 * r_max if delta is None else delta
        if eps is None and window is not None:
            eps = default_epsilon(window, delta)
        if eps is not None:
            report.add("bernoulli_p", bernoulli_p(z, beta, upper, lower, delta, eps, dim),
                       {"z": z, "beta": beta, "C1": upper, "C2": lower, "delta": delta, "eps": eps, "dim": dim},
                       "C2 z eps^d e^(-z s^d) / e^(z s^d (C1 - 1)), s = 2 delta + eps")

    elif isinstance(model, VoronoiModel):
        K = model.spec.K
        report.add("c_d", c_d_constant(dim), {"dim": dim},
                   "(1/3)(|B_{d-1}|/|B_d|)(sin^{d-1}(pi/12) cos(pi/12)/d + int_0^{pi/12} sin^d)")
        beta_c = beta_critical(z, K, dim)
        report.add("beta_c", beta_c, {"z": z, "K": K, "dim": dim}, "beta_c = z e^(-beta_c K) C_d",
                   note=f"beta={beta} {'<' if beta < beta_c else '>='} beta_c")
        if cell_volume is None and window is not None:
            cell_volume = window.volume
        if cell_volume is not None and isinstance(model.spec.phi, CappedVolume):
            report.add("voronoi_envelope", voronoi_envelope(z, beta, K, cell_volume),
                       {"z": z, "beta": beta, "K": K, "cell_volume": cell_volume},
                       "z e^(-beta K) <= lambda* <= z e^(beta K) e^(beta |C(x)|)")

    elif isinstance(model, KnnModel):
        phi = model.spec.phi
        if phi.bounded:
            n_d = model.n_d if n_d is None else n_d
            report.add("knn_envelope", knn_envelope(z, beta, model.spec.k, phi.sup_norm(), n_d),
                       {"z": z, "beta": beta, "k": model.spec.k, "phi_sup": phi.sup_norm(), "N_d": n_d},
                       "z e^(-/+ beta (1 + 2 N_d) k |Phi|_inf)")

    logger.info(f"Bounds report for {model.KIND}: {', '.join(report.entries) or 'none'}")
    return report
