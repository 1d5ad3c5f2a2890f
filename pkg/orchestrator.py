"""Orchestrator — experiment driver and command-line interface for gibbsfluct.

Runs chains from an experiment config, writes snapshots with a hashed
manifest, and turns the snapshots into variance, structure-factor, GNZ and
assumption reports next to the closed-form bounds.

Usage:
    python main.py simulate --config configs/strauss.toml --out runs/strauss
    python main.py analyze --out runs/strauss
    python main.py gnz-check --out runs/strauss
    python main.py verify-assumptions --out runs/strauss
    python main.py oracle-test --config configs/oracle_small.toml --out runs/oracle_small
    python main.py bounds c_d --dim 2
    python main.py bounds beta-critical --z 1 --K 1 --dim 2
"""

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from scipy.stats import chisquare

from bounds import (
    BoundsReport,
    bernoulli_p,
    beta_critical,
    build_bounds_report,
    c_d_constant,
    default_epsilon,
    integrability_integral,
    knn_envelope,
    pair_bound,
    strauss_bound,
    voronoi_envelope,
    wr_bound,
    wr_envelope,
)
from estimators import (
    InsufficientSamplesError,
    a1_moment,
    a2_profile,
    default_wavevectors,
    domination_check,
    estimate_intensity,
    gnz_residual,
    intensity_moments,
    pair_distance_histogram,
    sampled_intensities,
    stratified_probes,
    structure_factor,
    variance_curve,
    write_rows_csv,
)
from experiment_config import ConfigError, ExperimentConfig, ManifestError
from geometry import MarkedPoint
from knn_model import KnnModel, estimate_nd
from pair_model import PairModel, PairPotentialSpec
from papangelou import build_model
from point_io import read_points, sidecar_path, write_points
from run_config import close_logging, record_event, settings, setup_logging
from sampler import brute_force_oracle, make_rng, run_chains
from voronoi_model import VoronoiModel, voronoi_cell
from widom_rowlinson_model import WidomRowlinsonModel

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

LOGGER_NAMES = ("Orchestrator", "Sampler", "Estimators", "Bounds", "Models",
                "PointIO", "RunConfig", "ExperimentConfig")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Not JSON serializable: {type(value).__name__}")


def _finite(value):
    """JSON-safe float (inf and nan become strings)."""
    return value if math.isfinite(value) else str(value)


# ── Runner ──────────────────────────────────────────────────────────

class ExperimentRunner:
    """Simulates and analyzes one experiment inside an output directory."""

    MANIFEST_NAME = "manifest.json"
    RUN_LOG_NAME = "run_log.jsonl"
    SAMPLES_DIR = "samples"
    REPORTS_DIR = "reports"

    SE_MARGIN = 3.0             # Var/|Lambda| >= bound - 3 SE
    GNZ_TOLERANCE = 3.0         # |residual| <= 3 SE
    ORACLE_LEVEL = 0.01         # chi-square significance level
    MIN_EXPECTED_COUNT = 5.0    # chi-square bin merging threshold
    HISTOGRAM_TOLERANCE = 4.0   # pair histogram vs oracle, in combined SE
    ENVELOPE_RTOL = 1e-9

    def __init__(self, config, out_dir, threads=None):
        self.config = config
        self.out_dir = Path(out_dir)
        self.threads = settings.resolve_threads(threads)
        self.samples_dir = self.out_dir / self.SAMPLES_DIR
        self.reports_dir = self.out_dir / self.REPORTS_DIR
        self.manifest_path = self.out_dir / self.MANIFEST_NAME
        self.run_log = self.out_dir / self.RUN_LOG_NAME
        self.logger = logging.getLogger("Orchestrator")

    @classmethod
    def from_manifest(cls, out_dir, threads=None):
        """Rebuild the runner from a previous run's manifest."""
        manifest_path = Path(out_dir) / cls.MANIFEST_NAME
        if not manifest_path.exists():
            raise ManifestError(f"Manifest not found: {manifest_path}")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        config = ExperimentConfig.from_dict(manifest["config"])
        return cls(config, out_dir, threads=threads)

    @property
    def model(self):
        return self.config.model

    @property
    def window(self):
        return self.config.window

    @property
    def analysis(self):
        return self.config.analysis

    # ── Simulation ──────────────────────────────────────────────────

    def simulate(self):
        """Run every chain, write the snapshots and the manifest. Returns the ChainRuns."""
        cfg = self.config
        self.logger.info(
            f"Simulating {cfg.n_chains} chain(s) x {cfg.n_samples} samples of {self.model.KIND} "
            f"on L={self.window.side}, d={self.window.dim} (seed={cfg.seed}, threads={self.threads})"
        )
        runs = run_chains(self.model, self.window, cfg.schedule, cfg.n_samples, cfg.seed,
                          n_chains=cfg.n_chains, threads=self.threads)

        files = {}
        chains = []
        for run in runs:
            chain_name = f"chain_{run.chain_index:03d}"
            for j, snapshot in enumerate(run.snapshots):
                csv_path = write_points(self.samples_dir / chain_name / f"sample_{j:05d}.csv", snapshot)
                for path in (csv_path, sidecar_path(csv_path)):
                    files[path.relative_to(self.out_dir).as_posix()] = _sha256(path)
            chains.append({
                "chain_index": run.chain_index,
                "seed": run.seed,
                "steps": run.steps,
                "n_samples": len(run.snapshots),
                "acceptance": run.acceptance,
            })
            record_event("chain", chain_name, "success", log_path=self.run_log,
                         metadata={"steps": run.steps, "n_samples": len(run.snapshots)})

        manifest = {
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "chains": chains,
            "files": files,
        }
        _write_json(self.manifest_path, manifest)
        record_event("simulate", str(self.out_dir), "success", log_path=self.run_log,
                     metadata={"manifest_sha256": _sha256(self.manifest_path), "files": len(files)})
        return runs

    # ── Sample loading ──────────────────────────────────────────────

    def load_samples(self):
        """(snapshots, chain ids, manifest sha) after checking every file against the manifest."""
        if not self.manifest_path.exists():
            raise ManifestError(f"Manifest not found: {self.manifest_path}")
        manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        if manifest.get("config", {}).get("model") != self.config.to_dict()["model"] or \
                manifest.get("config", {}).get("window") != self.config.to_dict()["window"]:
            raise ManifestError("Manifest model/window does not match the experiment config")

        files = manifest.get("files", {})
        for rel, expected in files.items():
            path = self.out_dir / rel
            if not path.exists():
                raise ManifestError(f"Sample file listed in manifest is missing: {rel}")
            if _sha256(path) != expected:
                raise ManifestError(f"Sample file does not match its manifest hash: {rel}")
        on_disk = {p.relative_to(self.out_dir).as_posix() for p in self.samples_dir.rglob("*") if p.is_file()}
        extra = sorted(on_disk - set(files))
        if extra:
            raise ManifestError(f"Sample file not listed in manifest: {extra[0]}")

        cell_size = self.model.grid_cell_size(self.window)
        samples, chain_ids = [], []
        for rel in sorted(r for r in files if r.endswith(".csv")):
            samples.append(read_points(self.out_dir / rel, cell_size=cell_size))
            chain_ids.append(Path(rel).parent.name)
        if not samples:
            raise ManifestError(f"Manifest lists no samples: {self.manifest_path}")
        self.logger.info(f"Loaded {len(samples)} samples from {len(set(chain_ids))} chain(s)")
        return samples, chain_ids, _sha256(self.manifest_path)

    def _report(self, name, data, manifest_sha):
        data = {"manifest_sha256": manifest_sha, **data}
        path = _write_json(self.reports_dir / f"{name}.json", data)
        record_event("report", name, "success", log_path=self.run_log,
                     metadata={"manifest_sha256": manifest_sha})
        return path

    # ── Analysis ────────────────────────────────────────────────────

    def variance_bound(self, lam):
        """The closed-form lower bound on Var/|Lambda| for this model, or None."""
        model = self.model
        if isinstance(model, PairModel) and model.spec.kind == "strauss":
            return "strauss_bound", strauss_bound(model.z, model.beta, model.spec.radius, lam, model.dim)
        if isinstance(model, WidomRowlinsonModel) and model.spec.radius.is_fixed:
            return "wr_bound", wr_bound(model.z, model.beta, model.spec.radius.r_max, model.dim)
        return None, None

    def analyze_samples(self, samples, chain_ids, manifest_sha):
        """Every report computed from in-memory snapshots. Returns the report payloads."""
        a = self.analysis
        seed = self.config.seed
        reports = {}

        curve = variance_curve(samples, a["window_fractions"], chain_ids=chain_ids)
        intensity = estimate_intensity(samples)
        bound_name, bound = self.variance_bound(intensity.estimate)
        rows = []
        for fraction, row in zip(curve.fractions, curve.rows):
            entry = {
                "fraction": fraction, "volume": row.volume, "mean": row.mean, "var": row.var,
                "var_per_volume": row.var_per_volume, "se": row.se, "n_samples": row.n_samples,
            }
            if bound is not None:
                entry["bound"] = bound
                entry["passed"] = bool(row.var_per_volume >= bound - self.SE_MARGIN * row.se)
            rows.append(entry)
        reports["variance"] = {
            "intensity": {"estimate": intensity.estimate, "se": intensity.se},
            "bound_name": bound_name,
            "rows": rows,
            "passed": all(r.get("passed", True) for r in rows),
        }
        header = list(rows[0])
        write_rows_csv(self.reports_dir / "variance.csv", header, [[r[h] for h in header] for r in rows])

        wavevectors = a["wavevectors"] or default_wavevectors(self.window.dim, a["max_wavevector_index"])
        sf_rows = structure_factor(samples, wavevectors)
        reports["structure_factor"] = {"rows": [
            {"m": list(r.m), "k": r.k, "s": r.s, "se": r.se, "n_samples": r.n_samples} for r in sf_rows
        ]}
        write_rows_csv(self.reports_dir / "structure_factor.csv", ("m", "k", "s", "se", "n_samples"),
                       [(" ".join(map(str, r.m)), r.k, r.s, r.se, r.n_samples) for r in sf_rows])

        reports["gnz"] = {"results": [self._gnz_entry(samples, self.model, name) for name in a["test_functions"]]}

        m1, m2 = intensity_moments(samples, self.model, a["n_probes"], seed)
        a1 = a1_moment(samples, self.model, a["alpha1"], a["n_probes"], seed)
        a2 = a2_profile(samples, self.model, a["alpha2"], a["radii"], a["n_probes"], seed)
        reports["diagnostics"] = {
            "intensity_moments": {"mean": m1.estimate, "mean_se": m1.se, "second": m2.estimate, "second_se": m2.se},
            "a1": {"alpha1": a["alpha1"], "estimate": a1.estimate, "se": a1.se},
            "a2": {"alpha2": a2.alpha2, "conflicts": a2.conflicts, "rows": [
                {"radius": r.radius, "estimate": r.estimate, "se": r.se, "n_samples": r.n_samples}
                for r in a2.rows
            ]},
        }

        lam = intensity.estimate if intensity.estimate > 0 else None
        second = None
        if lam is not None and isinstance(self.model, PairModel):
            # E lambda*^2 >= (E lambda*)^2; clip Monte Carlo noise
            second = max(m2.estimate, lam * lam)
        report = build_bounds_report(self.model, self.window, lam=lam, m2=second,
                                     delta=a["delta"], eps=a["epsilon"])
        reports["bounds"] = report.to_dict()
        (self.reports_dir / "bounds.txt").write_text(report.to_text() + "\n", encoding="utf-8")

        for name, data in reports.items():
            self._report(name, data, manifest_sha)
        return reports

    def _gnz_entry(self, samples, model, test_function):
        a = self.analysis
        result = gnz_residual(samples, model, test_function, radius=a["gnz_radius"],
                              n_probes=a["n_probes"], seed=self.config.seed)
        return {
            "test_function": result.test_function,
            "lhs": result.lhs,
            "rhs": result.rhs,
            "residual": result.residual,
            "se": result.se,
            "z_score": _finite(result.z_score),
            "passed": bool(abs(result.z_score) <= self.GNZ_TOLERANCE),
        }

    def analyze(self):
        samples, chain_ids, manifest_sha = self.load_samples()
        self.reports_dir.mkdir(parents=True, exist_ok=True)
        reports = self.analyze_samples(samples, chain_ids, manifest_sha)
        result = "success" if reports["variance"]["passed"] else "failed"
        record_event("analyze", str(self.out_dir), result, log_path=self.run_log,
                     metadata={"manifest_sha256": manifest_sha})
        return reports

    # ── Checks ──────────────────────────────────────────────────────

    def gnz_check(self, z_scale=1.0):
        """GNZ residuals for every configured test function; z_scale misspecifies the activity."""
        samples, _, manifest_sha = self.load_samples()
        model = self.model
        if z_scale != 1.0:
            section = dict(model.to_section(), z=model.z * z_scale)
            model = build_model(section, self.window.dim)
            self.logger.info(f"GNZ check against misspecified activity z={model.z}")
        results = [self._gnz_entry(samples, model, name) for name in self.analysis["test_functions"]]
        passed = all(r["passed"] for r in results)
        self._report("gnz_check", {"z": model.z, "z_scale": z_scale, "results": results, "passed": passed},
                     manifest_sha)
        record_event("gnz_check", str(self.out_dir), "passed" if passed else "failed", log_path=self.run_log)
        return passed, results

    def _envelope_check(self, samples):
        """(envelope description, number of probes outside it, probes checked)."""
        a = self.analysis
        model = self.model
        z, beta = model.z, model.beta
        rtol = self.ENVELOPE_RTOL
        rng = make_rng(self.config.seed, 1 << 21)
        outside, checked = 0, 0

        if isinstance(model, VoronoiModel):
            K = model.spec.K
            for config in samples:
                for pos in stratified_probes(self.window, a["n_probes"], rng):
                    if config.has_position(pos):
                        continue
                    x = MarkedPoint(pos)
                    lower, upper = voronoi_envelope(z, beta, K, voronoi_cell(pos, config).volume)
                    lam = model.papangelou(x, config)
                    checked += 1
                    outside += not (lower * (1 - rtol) <= lam <= upper * (1 + rtol))
            return {"name": "voronoi_envelope", "K": K}, outside, checked

        if isinstance(model, WidomRowlinsonModel):
            lower, upper = wr_envelope(z, beta, model.spec.radius.r_max, model.dim)
            info = {"name": "wr_envelope", "lower": lower, "upper": upper}
        elif isinstance(model, KnnModel):
            if not model.spec.phi.bounded:
                return {"name": "knn_envelope", "skipped": "unbounded potential"}, 0, 0
            n_d = estimate_nd(model, samples, a["n_probes"], rng)
            lower, upper = knn_envelope(z, beta, model.spec.k, model.spec.phi.sup_norm(), n_d)
            info = {"name": "knn_envelope", "lower": lower, "upper": upper, "n_d_estimate": n_d,
                    "n_d_config": model.n_d}
        else:
            upper = model.upper_stability(self.window)
            if upper is None:
                return {"name": "upper_stability", "skipped": "no upper stability constant"}, 0, 0
            lower = 0.0
            info = {"name": "upper_stability", "lower": lower, "upper": upper}

        for values in sampled_intensities(samples, model, a["n_probes"], self.config.seed):
            for lam in values:
                checked += 1
                outside += not (lower * (1 - rtol) <= lam <= upper * (1 + rtol))
        return info, outside, checked

    def verify_assumptions(self):
        """Stability envelopes, A1/A2 moments and (for Widom–Rowlinson) the domination floor."""
        samples, _, manifest_sha = self.load_samples()
        a = self.analysis
        seed = self.config.seed
        checks = {}

        envelope, outside, checked = self._envelope_check(samples)
        checks["envelope"] = {**envelope, "outside": outside, "checked": checked, "passed": outside == 0}

        a1 = a1_moment(samples, self.model, a["alpha1"], a["n_probes"], seed)
        checks["a1"] = {"alpha1": a["alpha1"], "estimate": a1.estimate, "se": a1.se,
                        "passed": bool(math.isfinite(a1.estimate))}
        try:
            a2 = a2_profile(samples, self.model, a["alpha2"], a["radii"], a["n_probes"], seed)
            checks["a2"] = {
                "alpha2": a2.alpha2,
                "conflicts": a2.conflicts,
                "rows": [{"radius": r.radius, "estimate": r.estimate, "se": r.se} for r in a2.rows],
                "passed": bool(all(math.isfinite(r.estimate) for r in a2.rows)),
            }
        except InsufficientSamplesError as e:
            checks["a2"] = {"passed": False, "error": str(e)}

        if isinstance(self.model, WidomRowlinsonModel):
            r_max = self.model.spec.radius.r_max
            delta = a["delta"] if a["delta"] is not None else 2 * r_max
            eps = a["epsilon"] or default_epsilon(self.window, delta)
            lower, upper = wr_envelope(self.model.z, self.model.beta, r_max, self.model.dim)
            p = bernoulli_p(self.model.z, self.model.beta, upper, lower, delta, eps, self.model.dim)
            result = domination_check(samples, eps, p, confidence=a["confidence"])
            checks["domination"] = {
                "delta": delta, "eps": eps, "p": p, "min_occupancy": result.min_occupancy,
                "lower_bound": result.lower_bound, "se": result.se, "passed": result.passed,
            }

        passed = all(check["passed"] for check in checks.values())
        self._report("assumptions", {"checks": checks, "passed": passed}, manifest_sha)
        record_event("verify_assumptions", str(self.out_dir), "passed" if passed else "failed",
                     log_path=self.run_log)
        return passed, checks

    def oracle_test(self):
        """Chi-square test of the sampled law of N, plus the pair-distance histogram, against the oracle."""
        samples, _, manifest_sha = self.load_samples()
        a = self.analysis
        edges = np.linspace(0.0, self.window.max_distance, a["oracle_distance_bins"] + 1)
        try:
            oracle = brute_force_oracle(self.model, self.window, a["oracle_n_max"], a["oracle_mc_samples"],
                                        truncation_tol=a["truncation_tol"], seed=self.config.seed,
                                        distance_edges=edges)
        except ValueError as e:
            raise ConfigError(f"oracle-test is not available for this experiment: {e}", field="model") from None
        n_max = a["oracle_n_max"]
        counts = np.bincount([min(len(s), n_max) for s in samples], minlength=n_max + 1).astype(float)
        expected = oracle.probabilities * len(samples)
        observed, merged = _merge_bins(counts, expected, self.MIN_EXPECTED_COUNT)
        if len(observed) < 2:
            raise InsufficientSamplesError("Too few populated bins for a chi-square test")
        statistic, p_value = chisquare(observed, merged * observed.sum() / merged.sum())

        histogram = pair_distance_histogram(samples, edges)
        hist_rows = []
        for lo, hi, mean, se, target, target_se in zip(edges[:-1], edges[1:], histogram.mean, histogram.se,
                                                       oracle.pair_histogram, oracle.pair_histogram_se):
            total_se = math.hypot(se, target_se)
            z_score = (mean - target) / total_se if total_se > 0 else (0.0 if mean == target else math.inf)
            hist_rows.append({"lower": float(lo), "upper": float(hi), "mean": mean, "se": se,
                              "oracle": float(target), "oracle_se": float(target_se), "z_score": _finite(z_score),
                              "passed": bool(abs(z_score) <= self.HISTOGRAM_TOLERANCE)})

        law_passed = bool(p_value >= self.ORACLE_LEVEL)
        passed = law_passed and all(r["passed"] for r in hist_rows)
        self.logger.info(f"Oracle test: chi2={statistic:.4g}, p={p_value:.4g}, "
                         f"pair histogram {'ok' if all(r['passed'] for r in hist_rows) else 'off'} "
                         f"-> {'pass' if passed else 'fail'}")
        self._report("oracle", {
            "oracle": oracle.to_dict(),
            "observed": counts.tolist(),
            "chi2": float(statistic),
            "p_value": float(p_value),
            "level": self.ORACLE_LEVEL,
            "law_passed": law_passed,
            "pair_histogram": hist_rows,
            "passed": passed,
        }, manifest_sha)
        record_event("oracle_test", str(self.out_dir), "passed" if passed else "failed", log_path=self.run_log)
        return passed, float(p_value)


def _merge_bins(observed, expected, threshold):
    """Merge adjacent bins left to right until each expected count reaches threshold; a short tail joins the last bin."""
    obs_out, exp_out = [], []
    acc_obs = acc_exp = 0.0
    for o, e in zip(observed, expected):
        acc_obs += o
        acc_exp += e
        if acc_exp >= threshold:
            obs_out.append(acc_obs)
            exp_out.append(acc_exp)
            acc_obs = acc_exp = 0.0
    if acc_exp > 0 or acc_obs > 0:
        if exp_out:
            obs_out[-1] += acc_obs
            exp_out[-1] += acc_exp
        else:
            obs_out.append(acc_obs)
            exp_out.append(acc_exp)
    return np.array(obs_out), np.array(exp_out)


# ── Bounds subcommands ──────────────────────────────────────────────

def cmd_bounds(args):
    """Evaluate one bound (or a whole model report) and return the BoundsReport."""
    report = BoundsReport()
    name = args.bound
    if name == "c_d":
        report.add("c_d", c_d_constant(args.dim), {"dim": args.dim},
                   "(1/3)(|B_{d-1}|/|B_d|)(sin^{d-1}(pi/12) cos(pi/12)/d + int_0^{pi/12} sin^d)")
    elif name == "beta-critical":
        report.add("beta_c", beta_critical(args.z, args.K, args.dim), {"z": args.z, "K": args.K, "dim": args.dim},
                   "beta_c = z e^(-beta_c K) C_d")
    elif name == "integrability":
        spec = PairPotentialSpec(kind=args.model, z=args.z, beta=args.beta, radius=args.radius, s=args.s,
                                 A=args.A, B=args.B, a1=args.a1, a2=args.a2)
        result = integrability_integral(spec, args.dim, delta=args.delta)
        inputs = {"kind": args.model, "beta": args.beta, "dim": args.dim, "delta": args.delta}
        formula = "int |1 - exp(-beta Phi(|y|))| dy"
        if result.integrable:
            report.add("integrability", result.value, {**inputs, "error": result.error}, formula)
        else:
            report.add("integrability", None, inputs, formula, note=result.verdict)
    elif name == "strauss":
        report.add("strauss_bound", strauss_bound(args.z, args.beta, args.radius, args.lam, args.dim),
                   {"z": args.z, "beta": args.beta, "R": args.radius, "lambda": args.lam, "dim": args.dim},
                   "lambda^2 / (z + z^2 |B(0,R)| (1 - e^-beta))")
    elif name == "wr":
        report.add("wr_bound", wr_bound(args.z, args.beta, args.radius, args.dim),
                   {"z": args.z, "beta": args.beta, "R": args.radius, "dim": args.dim},
                   "e^(-beta |B(0,R)|) / (1 + z e^(beta |B(0,R)|) |B(0,2R)|)")
    elif name == "pair":
        report.add("pair_bound", pair_bound(args.lam, args.m2, args.integral),
                   {"lambda": args.lam, "m2": args.m2, "integral": args.integral},
                   "lambda^2 / (lambda + m2 * integral)")
    elif name == "bernoulli-p":
        report.add("bernoulli_p", bernoulli_p(args.z, args.beta, args.C1, args.C2, args.delta, args.eps, args.dim),
                   {"z": args.z, "beta": args.beta, "C1": args.C1, "C2": args.C2, "delta": args.delta,
                    "eps": args.eps, "dim": args.dim},
                   "C2 z eps^d e^(-z s^d) / e^(z s^d (C1 - 1)), s = 2 delta + eps")
    elif name == "voronoi-envelope":
        report.add("voronoi_envelope", voronoi_envelope(args.z, args.beta, args.K, args.cell_volume),
                   {"z": args.z, "beta": args.beta, "K": args.K, "cell_volume": args.cell_volume},
                   "z e^(-beta K) <= lambda* <= z e^(beta K) e^(beta |C(x)|)")
    elif name == "knn-envelope":
        report.add("knn_envelope", knn_envelope(args.z, args.beta, args.k, args.phi_sup, args.n_d),
                   {"z": args.z, "beta": args.beta, "k": args.k, "phi_sup": args.phi_sup, "N_d": args.n_d},
                   "z e^(-/+ beta (1 + 2 N_d) k |Phi|_inf)")
    elif name == "report":
        if args.config is None:
            raise ConfigError("bounds report needs --config")
        config = ExperimentConfig.from_file(args.config)
        a = config.analysis
        report = build_bounds_report(config.model, config.window, lam=args.lam, m2=args.m2,
                                     delta=a["delta"], eps=a["epsilon"])
    return report


# ── CLI ─────────────────────────────────────────────────────────────

class CliParser(argparse.ArgumentParser):
    """ArgumentParser that exits with the usage code on bad arguments."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    common = CliParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="Experiment config (TOML)")
    common.add_argument("--out", type=Path, default=None,
                        help=f"Output directory (default: {settings.output_root}/<config name>)")
    common.add_argument("--seed", type=int, default=None, help="Override sampler.seed")
    common.add_argument("--threads", type=int, default=None,
                        help="Worker count for chains (default: GIBBSFLUCT_THREADS or 1)")

    parser = CliParser(
        prog="gibbsfluct",
        description="gibbsfluct — Gibbs point process simulation and non-hyperuniformity bounds",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "Examples:\n"
            "  python main.py simulate --config configs/strauss.toml --out runs/strauss\n"
            "  python main.py analyze --out runs/strauss\n"
            "  python main.py gnz-check --out runs/strauss --z-scale 2\n"
            "  python main.py bounds c_d --dim 2\n"
            "  python main.py bounds integrability --model riesz --s 1 --dim 2\n"
        ),
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("simulate", parents=[common], help="Run chains and write samples + manifest")
    commands.add_parser("analyze", parents=[common], help="Variance, S(k), GNZ and diagnostic reports")
    gnz = commands.add_parser("gnz-check", parents=[common], help="GNZ residual test (exit 3 on rejection)")
    gnz.add_argument("--z-scale", type=float, default=1.0, help="Multiply the model activity (negative control)")
    commands.add_parser("verify-assumptions", parents=[common], help="Envelopes, A1/A2 and domination checks")
    commands.add_parser("oracle-test", parents=[common], help="Chi-square test against the brute-force oracle")

    bounds = commands.add_parser("bounds", help="Closed-form bounds and constants")
    which = bounds.add_subparsers(dest="bound", required=True)

    def sub(name, *flags, **defaults):
        p = which.add_parser(name, parents=[common])
        for flag in flags:
            dest = flag.lstrip("-").replace("-", "_")
            kind = int if dest in ("dim", "k") else float
            p.add_argument(flag, dest=dest, type=kind, default=defaults.get(dest),
                           required=dest not in defaults)
        return p

    sub("c_d", "--dim")
    sub("beta-critical", "--z", "--K", "--dim")
    integ = sub("integrability", "--dim", "--z", "--beta", "--radius", "--s", "--A", "--B", "--a1", "--a2",
                "--delta", z=1.0, beta=1.0, radius=None, s=None, A=None, B=None, a1=None, a2=None, delta=0.0)
    integ.add_argument("--model", required=True, choices=("strauss", "hard_core", "riesz", "lennard_jones"))
    sub("strauss", "--z", "--beta", "--radius", "--lam", "--dim")
    sub("wr", "--z", "--beta", "--radius", "--dim")
    sub("pair", "--lam", "--m2", "--integral")
    sub("bernoulli-p", "--z", "--beta", "--C1", "--C2", "--delta", "--eps", "--dim")
    sub("voronoi-envelope", "--z", "--beta", "--K", "--cell-volume")
    sub("knn-envelope", "--z", "--beta", "--k", "--phi-sup", "--n-d")
    sub("report", "--lam", "--m2", lam=None, m2=None)
    return parser


def _out_dir(args):
    if args.out is not None:
        return args.out
    if args.config is None:
        raise ConfigError("Either --out or --config is required")
    return settings.output_root / args.config.stem


def _runner(args):
    out_dir = _out_dir(args)
    if args.config is not None:
        config = ExperimentConfig.from_file(args.config).with_seed(args.seed)
        return ExperimentRunner(config, out_dir, threads=args.threads)
    runner = ExperimentRunner.from_manifest(out_dir, threads=args.threads)
    runner.config = runner.config.with_seed(args.seed)
    return runner


def _run_command(args, logger):
    if args.command == "bounds":
        report = cmd_bounds(args)
        print(report.to_text())
        print(report.to_json())
        if args.out is not None:
            _write_json(Path(args.out) / ExperimentRunner.REPORTS_DIR / f"bounds_{args.bound}.json", report.to_dict())
        return EXIT_OK

    runner = _runner(args)
    if args.command == "simulate":
        runner.simulate()
        return EXIT_OK
    if args.command == "analyze":
        reports = runner.analyze()
        if not reports["variance"]["passed"]:
            logger.warning("Variance fell below the closed-form bound minus 3 SE in some window")
        return EXIT_OK
    if args.command == "gnz-check":
        passed, _ = runner.gnz_check(z_scale=args.z_scale)
    elif args.command == "verify-assumptions":
        passed, _ = runner.verify_assumptions()
    else:
        passed, _ = runner.oracle_test()
    return EXIT_OK if passed else EXIT_NUMERICAL


def main(argv=None):
    args = build_parser().parse_args(argv)

    log_dir = None
    if args.command != "bounds" or args.out is not None:
        try:
            log_dir = _out_dir(args)
        except ConfigError:
            log_dir = None
    for name in LOGGER_NAMES:
        setup_logging(name, log_dir)
    logger = logging.getLogger("Orchestrator")

    try:
        return _run_command(args, logger)
    except (ConfigError, ManifestError, FileNotFoundError, InsufficientSamplesError) as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except ArithmeticError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except ValueError as e:
        logger.error(f"Invalid arguments: {e}")
        return EXIT_USAGE
    finally:
        for name in LOGGER_NAMES:
            close_logging(name)


if __name__ == "__main__":
    sys.exit(main())
