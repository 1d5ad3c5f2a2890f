"""Experiment configuration — the TOML file that fully determines a run.

Four flat sections; every default is resolved on load so that `to_dict()`
is the complete record echoed into the run manifest.

    [model]      kind = "strauss", z, beta, plus the kind's own keys
    [window]     side, dim, boundary = "periodic" | "free"
    [sampler]    seed, n_samples, n_chains, p_birth, p_death, p_move,
                 move_sigma, burn_in, thin
    [analysis]   window_fractions, wavevectors | max_wavevector_index,
                 alpha1, alpha2, delta, epsilon, radii, n_probes,
                 gnz_radius, test_functions, confidence,
                 oracle_n_max, oracle_mc_samples, oracle_distance_bins,
                 truncation_tol
"""

import logging
import math
import re
import tomllib
from dataclasses import dataclass, field
from pathlib import Path

from estimators import DEFAULT_WINDOW_FRACTIONS, TEST_FUNCTIONS
from geometry import Boundary, Window
from papangelou import build_model
from sampler import SamplerSchedule

logger = logging.getLogger("ExperimentConfig")

SECTIONS = ("model", "window", "sampler", "analysis")
SAMPLER_KEYS = ("seed", "n_samples", "n_chains", "p_birth", "p_death", "p_move",
                "move_sigma", "burn_in", "thin")
ANALYSIS_DEFAULTS = {
    "window_fractions": list(DEFAULT_WINDOW_FRACTIONS),
    "wavevectors": None,
    "max_wavevector_index": 3,
    "alpha1": 1.5,
    "alpha2": 2.0,
    "delta": None,
    "epsilon": None,
    "radii": None,
    "n_probes": 64,
    "gnz_radius": None,
    "test_functions": ["constant"],
    "confidence": 0.99,
    "oracle_n_max": 5,
    "oracle_mc_samples": 200_000,
    "oracle_distance_bins": 4,
    "truncation_tol": 1e-6,
}
_LOCATION = re.compile(r"line (\d+), column (\d+)")


class ConfigError(ValueError):
    """Invalid experiment configuration, located by field path and/or line/column."""

    def __init__(self, message, field=None, line=None, col=None, path=None):
        self.field = field
        self.line = line
        self.col = col
        self.path = path
        super().__init__(message)

    def __str__(self):
        where = []
        if self.path is not None:
            where.append(str(self.path))
        if self.line is not None:
            where.append(f"line {self.line}, column {self.col}")
        if self.field is not None:
            where.append(f"field {self.field}")
        message = super().__str__()
        return f"{': '.join(where)}: {message}" if where else message


class ManifestError(ValueError):
    """Sample directory does not match its manifest."""


@dataclass
class ExperimentConfig:
    model: object
    window: Window
    seed: int
    n_samples: int
    n_chains: int
    schedule: SamplerSchedule
    analysis: dict = field(default_factory=lambda: dict(ANALYSIS_DEFAULTS))
    source: Path | None = None

    # ── Loading ────────────────────────────────────────────────────

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}", path=path)
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            line, col = getattr(e, "lineno", None), getattr(e, "colno", None)
            if line is None:
                match = _LOCATION.search(str(e))
                if match:
                    line, col = int(match.group(1)), int(match.group(2))
            message = getattr(e, "msg", None) or str(e)
            raise ConfigError(f"TOML syntax error: {message}", line=line, col=col, path=path) from None
        try:
            config = cls.from_dict(data)
        except ConfigError as e:
            e.path = path
            raise
        config.source = path
        logger.debug(f"Loaded experiment config from {path}")
        return config

    @classmethod
    def from_dict(cls, data):
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"Unknown section(s): {', '.join(unknown)}", field=unknown[0])
        for name in ("model", "window"):
            if name not in data:
                raise ConfigError(f"Missing [{name}] section", field=name)

        window = cls._parse_window(data["window"])
        model = cls._parse_model(data["model"], window)
        sampler = dict(data.get("sampler", {}))
        unknown = sorted(set(sampler) - set(SAMPLER_KEYS))
        if unknown:
            raise ConfigError(f"Unknown sampler key(s): {', '.join(unknown)}", field=f"sampler.{unknown[0]}")

        seed = _integer(sampler, "seed", 0, minimum=0)
        n_samples = _integer(sampler, "n_samples", 100, minimum=1)
        n_chains = _integer(sampler, "n_chains", 1, minimum=1)
        try:
            schedule = SamplerSchedule(
                p_birth=float(sampler.get("p_birth", 0.4)),
                p_death=float(sampler.get("p_death", 0.4)),
                p_move=float(sampler.get("p_move", 0.2)),
                move_sigma=sampler.get("move_sigma"),
                burn_in=sampler.get("burn_in"),
                thin=sampler.get("thin"),
            ).resolved(model, window)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e), field="sampler") from None

        analysis = cls._parse_analysis(data.get("analysis", {}), model, window)
        return cls(model=model, window=window, seed=seed, n_samples=n_samples,
                   n_chains=n_chains, schedule=schedule, analysis=analysis)

    @staticmethod
    def _parse_window(section):
        unknown = sorted(set(section) - {"side", "dim", "boundary"})
        if unknown:
            raise ConfigError(f"Unknown window key(s): {', '.join(unknown)}", field=f"window.{unknown[0]}")
        for key in ("side", "dim"):
            if key not in section:
                raise ConfigError(f"Missing window.{key}", field=f"window.{key}")
        boundary = section.get("boundary", Boundary.PERIODIC.value)
        try:
            return Window(side=float(section["side"]), dim=int(section["dim"]), boundary=Boundary(boundary))
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e), field="window") from None

    @staticmethod
    def _parse_model(section, window):
        if "kind" not in section:
            raise ConfigError("Missing model.kind", field="model.kind")
        try:
            model = build_model(section, window.dim)
            model.check_window(window)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e), field="model") from None
        return model

    @staticmethod
    def _parse_analysis(section, model, window):
        unknown = sorted(set(section) - set(ANALYSIS_DEFAULTS))
        if unknown:
            raise ConfigError(f"Unknown analysis key(s): {', '.join(unknown)}", field=f"analysis.{unknown[0]}")
        analysis = dict(ANALYSIS_DEFAULTS)
        analysis.update(section)

        fractions = analysis["window_fractions"]
        if not fractions or any(not 0 < f <= 1 for f in fractions):
            raise ConfigError(f"window_fractions must lie in (0, 1], got {fractions}",
                              field="analysis.window_fractions")
        analysis["window_fractions"] = sorted(float(f) for f in fractions)

        if analysis["wavevectors"] is not None:
            vectors = [list(map(int, m)) for m in analysis["wavevectors"]]
            if any(len(m) != window.dim or not any(m) for m in vectors):
                raise ConfigError(f"wavevectors must be non-zero integer {window.dim}-vectors",
                                  field="analysis.wavevectors")
            analysis["wavevectors"] = vectors

        for key in ("alpha1", "alpha2"):
            if not analysis[key] > 1:
                raise ConfigError(f"{key} must be > 1, got {analysis[key]}", field=f"analysis.{key}")
        if not 0 < analysis["confidence"] < 1:
            raise ConfigError(f"confidence must be in (0, 1), got {analysis['confidence']}",
                              field="analysis.confidence")
        for key in ("n_probes", "oracle_n_max", "oracle_mc_samples", "oracle_distance_bins", "max_wavevector_index"):
            if int(analysis[key]) != analysis[key] or analysis[key] < 1:
                raise ConfigError(f"{key} must be a positive integer, got {analysis[key]}",
                                  field=f"analysis.{key}")
        if analysis["oracle_mc_samples"] < 2:
            raise ConfigError(f"oracle_mc_samples must be >= 2, got {analysis['oracle_mc_samples']}",
                              field="analysis.oracle_mc_samples")

        unknown_tests = sorted(set(analysis["test_functions"]) - set(TEST_FUNCTIONS))
        if unknown_tests:
            raise ConfigError(f"Unknown test function(s): {', '.join(unknown_tests)}",
                              field="analysis.test_functions")

        cutoff = model.interaction_cutoff(window)
        reach = cutoff if cutoff and cutoff > 0 else model.typical_spacing()
        half = window.side / 2
        if analysis["gnz_radius"] is None:
            analysis["gnz_radius"] = float(min(reach, half))
        if analysis["radii"] is None:
            top = min(2 * reach, half)
            analysis["radii"] = [top * (i + 1) / 4 for i in range(4)]
        analysis["radii"] = sorted(float(r) for r in analysis["radii"])
        if analysis["radii"][0] <= 0:
            raise ConfigError("radii must be > 0", field="analysis.radii")
        if window.periodic and analysis["radii"][-1] > half:
            raise ConfigError(f"radii must not exceed half the periodic window side {half}, "
                              f"got {analysis['radii'][-1]}", field="analysis.radii")
        if not analysis["gnz_radius"] > 0:
            raise ConfigError(f"gnz_radius must be > 0, got {analysis['gnz_radius']}", field="analysis.gnz_radius")
        if analysis["delta"] is not None and not analysis["delta"] >= 0:
            raise ConfigError(f"delta must be >= 0, got {analysis['delta']}", field="analysis.delta")
        epsilon = analysis["epsilon"]
        if epsilon is not None:
            ratio = window.side / epsilon if epsilon > 0 else math.nan
            if not (epsilon > 0 and abs(ratio - round(ratio)) <= 1e-9 * ratio):
                raise ConfigError(f"epsilon must divide the window side {window.side}, got {epsilon}",
                                  field="analysis.epsilon")
        return analysis

    # ── Export ─────────────────────────────────────────────────────

    def to_dict(self):
        sampler = {"seed": self.seed, "n_samples": self.n_samples, "n_chains": self.n_chains}
        sampler.update(self.schedule.to_dict())
        return {
            "model": self.model.to_section(),
            "window": self.window.to_dict(),
            "sampler": sampler,
            "analysis": dict(self.analysis),
        }

    def with_seed(self, seed):
        """Same experiment on a different seed (CLI --seed override)."""
        if seed is None:
            return self
        if int(seed) != seed or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed}", field="sampler.seed")
        return ExperimentConfig(model=self.model, window=self.window, seed=int(seed),
                                n_samples=self.n_samples, n_chains=self.n_chains,
                                schedule=self.schedule, analysis=dict(self.analysis), source=self.source)


def _integer(section, key, default, minimum):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}, got {value!r}", field=f"sampler.{key}")
    return value
