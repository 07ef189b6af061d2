import json
import math

import numpy as np
import pytest

from framesde.chart_sde import orthonormal_frame_at
from framesde.fields import AmbientRotation, IdentityTensor, ScaledIdentity, ZeroVector
from framesde.geometry import ChartPoint, make_model
from framesde.integrator import NoiseSource, simulate
from framesde.report import VerificationReport, evaluate_rule
from framesde.verify import (ambient_linear, check_frame_invariant, comparison_bounds, constant_function,
                             exact_laplacian_distance, exit_probability_study, find_overlap_state, fit_loglog,
                             flow_moment_study, frame_drift, frame_refinement_study, generator_residual,
                             generator_value, holonomy_angle, holonomy_check, ito_strat_fd_check,
                             laplacian_comparison_check, laplacian_of_distance, overlap_partner,
                             squared_distance_flat, transition_consistency_check, transition_horizon,
                             weak_scheme_agreement)


@pytest.mark.parametrize("rule,value,target,tol,se,expected", [
    ("abs", 1.05, 1.0, 0.1, None, True),
    ("abs", 1.2, 1.0, 0.1, None, False),
    ("abs", 1.2, 1.0, 0.1, 0.05, True),
    ("abs", float("nan"), 0.0, 1.0, None, False),
    ("le", 1e-7, 1e-6, None, None, True),
    ("le", float("nan"), 1e-6, None, None, False),
    ("ge", 1.7, 1.6, None, None, True),
    ("ge", float("nan"), 1.6, None, None, False),
    ("gt", float("inf"), 0.0, None, None, True),
    ("gt", 0.0, 0.0, None, None, False),
    ("range", 2.0, [1.5, 3.0], 0.0, None, True),
    ("range", 1.4, [1.5, 3.0], 0.0, None, False),
    ("true", True, None, None, None, True),
    ("true", False, None, None, None, False),
])
def test_rule_evaluation(rule, value, target, tol, se, expected):
    assert evaluate_rule(rule, value, target, tol, se) is expected


def test_report_pass_flags_follow_numbers_and_serialise():
    rep = VerificationReport(meta={"x": np.arange(3)})
    rep.add("a", 0.5, target=1.0, rule="le", extra=np.array([1.0, 2.0]))
    rep.add("b", float("nan"), target=0.0, tol=1.0)
    assert rep["a"].passed and not rep["b"].passed and not rep.passed
    data = json.loads(rep.to_json())
    assert [e["pass"] for e in data["entries"]] == [True, False]
    assert data["entries"][1]["value"] == "nan"
    assert data["meta"]["x"] == [0, 1, 2]
    assert "[FAIL] b" in rep.summary()
    with pytest.raises(ValueError):
        evaluate_rule("bogus", 1, 1, 0, None)
    with pytest.raises(KeyError):
        rep["missing"]


def test_frame_drift_and_invariant_on_sphere():
    S = make_model("sphere")
    init = orthonormal_frame_at(S, ChartPoint(0, [0.0, 0.0]))
    rec = simulate(S, IdentityTensor(), ZeroVector(), init, 0.5, 1e-3, noise=NoiseSource(0, 0))
    drift = frame_drift(rec, S)
    assert 0.0 < drift < 0.05
    rep = check_frame_invariant(rec, S)
    assert rep.passed
    assert rep["frame.max_gram_drift"].value == drift


def test_frame_refinement_ratio_on_sphere():
    S = make_model("sphere")
    init = orthonormal_frame_at(S, ChartPoint(0, [0.0, 0.0]))
    rep = frame_refinement_study(S, IdentityTensor(), ZeroVector(), init, 0.5, 2e-3, n_seeds=6)
    assert "frame.refinement_ratio_median" in rep.names()
    assert rep.passed, rep.summary()


def test_frame_refinement_exact_zero_branch_on_flat_model():
    E = make_model("euclidean")
    init = orthonormal_frame_at(E, ChartPoint(0, [0.0, 0.0]))
    rep = frame_refinement_study(E, IdentityTensor(), ZeroVector(), init, 0.5, 1e-2, n_seeds=4)
    assert "frame.drift_exact_zero" in rep.names()
    assert "frame.refinement_ratio_median" not in rep.names()
    assert rep.passed


@pytest.mark.parametrize("kind", ["euclidean", "sphere", "hyperbolic", "torus"])
def test_ito_fd_check(kind):
    rep = ito_strat_fd_check(make_model(kind), ScaledIdentity(1.0, 0.2, 0), ZeroVector(), n_states=20)
    assert rep.passed, rep.summary()


def test_generator_values_from_closed_forms():
    # squared distance in the plane: L |x - c|^2 = d; cos d(x0, .) on S^2: L = -(d/2) cos 0
    E = make_model("euclidean")
    p = ChartPoint(0, [0.1, -0.2])
    c = E.embed(np.array([0]), p.x[None])[0]
    assert generator_value(E, IdentityTensor(), ZeroVector(), p, squared_distance_flat(c)) == pytest.approx(2.0)
    S = make_model("sphere")
    q = ChartPoint(0, [0.2, 0.1])
    P0 = S.embed(np.array([0]), q.x[None])[0]
    assert generator_value(S, IdentityTensor(), ZeroVector(), q, ambient_linear(P0)) == pytest.approx(-1.0,
                                                                                                      abs=1e-6)
    assert generator_value(S, IdentityTensor(), AmbientRotation(1.0), q, constant_function()) == 0.0


def test_generator_residual_small_horizon():
    S = make_model("sphere")
    q = ChartPoint(0, [0.2, 0.1])
    P0 = S.embed(np.array([0]), q.x[None])[0]
    rep = generator_residual(S, IdentityTensor(), ZeroVector(), q, ambient_linear(P0), 0.01, 1e-3, 400)
    assert rep.passed, rep.summary()


def test_weak_scheme_agreement_small():
    S = make_model("sphere")
    q = ChartPoint(0, [0.0, 0.0])
    P0 = S.embed(np.array([0]), q.x[None])[0]
    rep = weak_scheme_agreement(S, IdentityTensor(), ZeroVector(), q, ambient_linear(P0), 0.2, 5e-3, 300)
    assert rep.passed, rep.summary()


def test_fit_loglog_on_exact_power_law():
    x = np.geomspace(1e-3, 1e-1, 6)
    slope, keep = fit_loglog(x, 3.0 * x ** 1.5)
    assert slope == pytest.approx(1.5, abs=1e-12)
    assert keep.all()
    assert math.isnan(fit_loglog([1.0, 2.0], [0.0, 1.0])[0])


def test_flow_study_euclidean_slope_is_one():
    E = make_model("euclidean")
    study = flow_moment_study(E, n_paths=400, h=1e-3, dt_grid=[1e-3, 4e-3, 1.6e-2])
    rep = study.report({2.0: (0.9, 1.1)}, "E")
    assert rep.passed, rep.summary()
    # E d^2 = 2 dt exactly in law for planar Brownian motion
    np.testing.assert_allclose(study.estimates[2.0], 2.0 * np.array(study.dt_grid), rtol=0.3)
    assert study.report(None)["flow.slope_p=2"].rule == "gt"


def test_exit_study_rejects_large_radius_and_reports_probabilities():
    E = make_model("euclidean")
    with pytest.raises(ValueError):
        exit_probability_study(E, IdentityTensor(), ZeroVector(), 0, [0.0, 0.0], rho=0.95)
    rep = exit_probability_study(E, IdentityTensor(), ZeroVector(), 0, [0.0, 0.0], n_paths=300,
                                 dt_grid=[0.0025, 0.005, 0.01])
    probs = rep["exit.slope"].details["probabilities"]
    assert len(probs) == 3 and np.all(np.diff(probs) >= 0)
    assert rep["exit.monotone"].passed


def test_comparison_bounds_and_exact_values():
    S, H, E = make_model("sphere"), make_model("hyperbolic"), make_model("euclidean")
    assert exact_laplacian_distance(S, math.pi / 4) == pytest.approx(1.0)
    assert exact_laplacian_distance(E, 0.5) == pytest.approx(2.0)
    assert exact_laplacian_distance(H, 1.0) == pytest.approx(1.0 / math.tanh(1.0))
    lo, hi = comparison_bounds(E, 0.5)
    assert lo == hi == pytest.approx(2.0)


@pytest.mark.parametrize("kind", ["euclidean", "sphere", "hyperbolic"])
def test_laplacian_check(kind):
    m = make_model(kind)
    rep = laplacian_comparison_check(m, r_grid=[0.3, 0.9], n_directions=2)
    assert rep.passed, rep.summary()


def test_laplacian_of_distance_matches_closed_form_on_sphere():
    S = make_model("sphere")
    P0 = np.array([0.0, 0.0, 1.0])
    Q = np.array([math.sin(1.0), 0.0, math.cos(1.0)])
    assert laplacian_of_distance(S, P0, Q) == pytest.approx(1.0 / math.tan(1.0), abs=1e-6)


def test_holonomy_angle_on_latitude_circle():
    S = make_model("sphere")
    assert holonomy_check(S).passed
    angle = holonomy_angle(S, colatitude=math.pi / 2, n_steps=2000)
    # the equator is a geodesic: the enclosed area 2 pi gives a trivial rotation
    assert abs((angle + math.pi) % (2 * math.pi) - math.pi) < 1e-3
    with pytest.raises(ValueError):
        holonomy_angle(make_model("sphere", d=3))


def test_transition_check_on_sphere_and_flat_exact_zero():
    S = make_model("sphere")
    state, partner = find_overlap_state(S, seed=1)
    assert overlap_partner(S, state) == partner
    T = transition_horizon(S, IdentityTensor(), state, partner)
    assert 0 < T <= 0.01
    rep = transition_consistency_check(S, IdentityTensor(), ZeroVector(), state, partner, n_seeds=8)
    assert rep.passed, rep.summary()
    Tm = make_model("torus")
    st2, p2 = find_overlap_state(Tm, seed=1)
    rep2 = transition_consistency_check(Tm, IdentityTensor(), ZeroVector(), st2, p2, n_seeds=4)
    assert "transition.gap_exact_zero" in rep2.names()
    assert rep2.passed


def test_overlap_partner_none_at_chart_centre():
    S = make_model("sphere")
    assert overlap_partner(S, orthonormal_frame_at(S, ChartPoint(0, [0.0, 0.0]))) is None
