import json
import math

import numpy as np
import pytest

from bounds import (
    BoundEntry,
    BoundsReport,
    beta_critical,
    bernoulli_p,
    build_bounds_report,
    c_d_constant,
    default_epsilon,
    integrability_integral,
    integrability_integrand,
    knn_envelope,
    pair_bound,
    strauss_bound,
    voronoi_envelope,
    wr_bound,
    wr_envelope,
)
from geometry import Window, ball_volume
from papangelou import build_model
from pair_model import PairPotentialSpec
from sampler import make_rng


def test_c_d_constants():
    assert c_d_constant(1) == pytest.approx(1 / 6, rel=1e-12)
    assert c_d_constant(2) == pytest.approx(1 / 36, rel=1e-12)
    assert c_d_constant(3) == pytest.approx(0.006, abs=5e-4)
    with pytest.raises(ValueError):
        c_d_constant(4)


def test_beta_critical_is_the_unique_root():
    root = beta_critical(1.0, 1.0, 2)
    c_d = c_d_constant(2)
    assert root == pytest.approx(0.027, abs=5e-4)
    assert abs(root - math.exp(-root) * c_d) <= 1e-12
    grid = np.linspace(0.0, c_d, 1_000_001)
    residual = grid - np.exp(-grid) * c_d
    assert np.count_nonzero(np.diff(np.sign(residual)) != 0) == 1


def test_beta_critical_without_cap():
    assert beta_critical(2.0, 0.0, 1) == pytest.approx(2.0 / 6)
    with pytest.raises(ValueError):
        beta_critical(0.0, 1.0, 2)


def test_strauss_integral_is_a_ball():
    rng = make_rng(8, 0)
    for _ in range(20):
        beta = float(rng.uniform(0.1, 5.0))
        radius = float(rng.uniform(0.01, 2.0))
        dim = int(rng.integers(1, 4))
        spec = PairPotentialSpec("strauss", z=1.0, beta=beta, radius=radius)
        result = integrability_integral(spec, dim)
        assert result.integrable
        assert result.value == pytest.approx(-math.expm1(-beta) * ball_volume(dim, radius), rel=1e-8)


def test_inner_cutoff_removes_the_core():
    spec = PairPotentialSpec("hard_core", z=1.0, beta=1.0, radius=0.5)
    assert integrability_integral(spec, 2).value == pytest.approx(ball_volume(2, 0.5), rel=1e-8)
    assert integrability_integral(spec, 2, delta=0.3).value == pytest.approx(
        ball_volume(2, 0.5) - ball_volume(2, 0.3), rel=1e-8)
    assert integrability_integral(spec, 2, delta=0.7).value == 0.0


@pytest.mark.parametrize("s, dim", [(3.0, 2), (4.0, 3), (2.5, 1)])
def test_riesz_integral_closed_form(s, dim):
    beta = 0.8
    spec = PairPotentialSpec("riesz", z=1.0, beta=beta, s=s)
    expected = ball_volume(dim, 1.0) * beta ** (dim / s) * math.gamma(1 - dim / s)
    assert integrability_integral(spec, dim).value == pytest.approx(expected, rel=1e-6)


def test_slow_riesz_tail_is_not_integrable():
    spec = PairPotentialSpec("riesz", z=1.0, beta=1.0, s=1.0)
    result = integrability_integral(spec, 2)
    assert not result.integrable
    assert result.value == math.inf
    assert result.verdict.startswith("non-integrable")


def test_zero_beta_integrates_to_zero():
    spec = PairPotentialSpec("strauss", z=1.0, beta=0.0, radius=0.3)
    assert integrability_integral(spec, 2).value == 0.0


def test_integrand_at_the_origin():
    strauss = PairPotentialSpec("strauss", z=1.0, beta=0.5, radius=0.3)
    assert integrability_integrand(strauss, 1, 0.0) == pytest.approx(-2 * math.expm1(-0.5))
    assert integrability_integrand(strauss, 2, 0.0) == 0.0
    hard_core = PairPotentialSpec("hard_core", z=1.0, beta=1.0, radius=0.3)
    assert integrability_integrand(hard_core, 1, 0.0) == pytest.approx(2.0)
    riesz = PairPotentialSpec("riesz", z=1.0, beta=1.0, s=2.0)
    assert integrability_integrand(riesz, 1, 0.0) == pytest.approx(2.0)
    assert integrability_integrand(strauss, 1, 0.2) == pytest.approx(-2 * math.expm1(-0.5))
    assert integrability_integrand(strauss, 1, 0.4) == 0.0


def test_closed_form_bounds():
    assert strauss_bound(1.0, 1.0, 0.1, 0.9, 2) == pytest.approx(
        0.81 / (1 + math.pi * 0.01 * (1 - math.exp(-1))))
    ball = math.pi * 0.01
    assert wr_bound(2.0, 1.0, 0.1, 2) == pytest.approx(
        math.exp(-ball) / (1 + 2.0 * math.exp(ball) * 4 * ball))
    assert pair_bound(1.0, 1.0, 0.0) == 1.0
    assert pair_bound(2.0, 5.0, 0.5) == pytest.approx(4 / 4.5)
    with pytest.raises(ValueError):
        pair_bound(2.0, 3.0, 0.5)
    with pytest.raises(ValueError):
        strauss_bound(1.0, 1.0, 0.1, 0.0, 2)


def test_strauss_bound_without_interaction_is_the_intensity():
    assert strauss_bound(3.0, 0.0, 0.2, 3.0, 2) == pytest.approx(3.0)


def test_bernoulli_p():
    z, c1, c2, delta, eps = 1.0, 1.0, 0.5, 0.2, 0.1
    s = 2 * delta + eps
    expected = c2 * z * eps ** 2 * math.exp(-z * s ** 2) / math.exp(z * s ** 2 * (c1 - 1))
    assert bernoulli_p(z, 1.0, c1, c2, delta, eps, 2) == pytest.approx(expected)
    with pytest.raises(ValueError):
        bernoulli_p(z, 1.0, 0.5, 1.0, delta, eps, 2)
    with pytest.raises(ValueError):
        bernoulli_p(z, 1.0, c1, c2, delta, 0.0, 2)


def test_envelopes_are_ordered():
    lo, hi = voronoi_envelope(2.0, 0.5, 0.1, 1.0)
    assert lo == pytest.approx(2.0 * math.exp(-0.05))
    assert hi == pytest.approx(2.0 * math.exp(0.55))
    lo, hi = knn_envelope(1.0, 0.5, 2, 1.0, 3.0)
    assert (lo, hi) == pytest.approx((math.exp(-7.0), math.exp(7.0)))
    lo, hi = wr_envelope(1.5, 1.0, 0.25, 2)
    assert lo == pytest.approx(1.5 * math.exp(-math.pi / 16))
    assert hi == 1.5
    with pytest.raises(ValueError):
        knn_envelope(1.0, 0.5, 2, math.inf, 3.0)


def test_default_epsilon_tiles_the_window():
    window = Window(side=6.0, dim=2)
    assert default_epsilon(window, 1.0) == 1.0
    assert default_epsilon(window, 0.7) == pytest.approx(6.0 / 9)


def test_entry_validation():
    with pytest.raises(ValueError, match="Unknown bound"):
        BoundEntry("variance", 1.0, {}, "")
    with pytest.raises(ValueError, match="note"):
        BoundEntry("pair_bound", None, {}, "")
    with pytest.raises(ValueError, match="ordered"):
        BoundEntry("wr_envelope", (2.0, 1.0), {}, "")
    with pytest.raises(ValueError):
        BoundEntry("c_d", -1.0, {}, "")
    assert BoundEntry("integrability", None, {}, "", note="diverges").value_text() == "n/a"


def test_report_rendering():
    report = BoundsReport()
    report.add("c_d", 1 / 36, {"dim": 2}, "C_d")
    report.add("wr_envelope", (0.5, 1.0), {}, "envelope", note="fixed radius")
    with pytest.raises(ValueError, match="already"):
        report.add("c_d", 1 / 36, {"dim": 2}, "C_d")
    assert "c_d" in report
    assert report.value("c_d") == pytest.approx(1 / 36)
    lines = report.to_text().splitlines()
    assert lines[0].startswith("c_d          0.02777777778")
    assert lines[1].endswith("(fixed radius)")
    data = json.loads(report.to_json())
    assert data["entries"][1]["value"] == [0.5, 1.0]
    assert BoundsReport().to_text() == "(no bounds)"


def test_report_for_strauss():
    model = build_model({"kind": "strauss", "z": 50.0, "beta": 1.0, "radius": 0.05}, 2)
    report = build_bounds_report(model, lam=30.0, m2=1000.0)
    assert list(report.entries) == ["integrability", "strauss_bound", "pair_bound"]
    integral = report.value("integrability")
    assert integral == pytest.approx((1 - math.exp(-1)) * ball_volume(2, 0.05), rel=1e-8)
    assert report.value("pair_bound") == pytest.approx(900 / (30 + 1000 * integral))
    assert list(build_bounds_report(model).entries) == ["integrability"]


def test_report_for_widom_rowlinson():
    model = build_model({"kind": "widom_rowlinson", "z": 1.0, "beta": 1.0, "radius": 0.25}, 2)
    report = build_bounds_report(model, Window(side=6.0, dim=2))
    assert set(report.entries) == {"wr_bound", "wr_envelope", "bernoulli_p"}
    lower, upper = report.value("wr_envelope")
    assert report["bernoulli_p"].inputs["C1"] == upper
    assert report["bernoulli_p"].inputs["C2"] == lower
    assert report["bernoulli_p"].inputs["delta"] == 0.5
    assert report["bernoulli_p"].inputs["eps"] == 0.5


def test_report_for_voronoi_and_knn():
    voronoi = build_model({"kind": "voronoi", "z": 1.0, "beta": 0.01, "K": 1.0}, 2)
    report = build_bounds_report(voronoi, Window(side=2.0, dim=2))
    assert set(report.entries) == {"c_d", "beta_c", "voronoi_envelope"}
    assert report["beta_c"].note.startswith("beta=0.01 <")
    knn = build_model({"kind": "knn", "z": 1.0, "k": 2, "r": [0.0, 0.2], "phi": [1.0, 0.0]}, 2)
    assert list(build_bounds_report(knn, n_d=4.0).entries) == ["knn_envelope"]
    coulomb = build_model({"kind": "knn", "z": 1.0, "k": 1, "potential": "coulomb"}, 3)
    assert not build_bounds_report(coulomb).entries
