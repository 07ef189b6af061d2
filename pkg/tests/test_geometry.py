import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framesde.errors import DegeneratePlane, NotInOverlap, PointOutsideChart
from framesde.geometry import (ChartPoint, bounded_geometry_report, christoffel, christoffel_derivative,
                               christoffel_transformation_residual, curvature_report, make_model, metric_at,
                               ricci, riemann, sectional, transition, verify_uniform_atlas)
from framesde.geometry.curvature import (christoffel_from_metric, connection_batch, connection_batch_generic,
                                         fd_christoffel, fd_christoffel_derivative, fd_metric_derivative,
                                         pullback_metric_fd)

KINDS = ["euclidean", "sphere", "hyperbolic", "torus"]
SECTIONAL = {"euclidean": 0.0, "sphere": 1.0, "hyperbolic": -1.0, "torus": 0.0}


def sample_points(model, n, seed=0, radius=0.9):
    rng = np.random.default_rng(seed)
    P = model.sample(n, rng)
    pts = []
    for point in P:
        chart = int(model.partition_chart(point[None])[0])
        x = model.coords(np.array([chart]), point[None])[0]
        if np.linalg.norm(x) < radius:
            pts.append(ChartPoint(chart, x))
    return pts


@pytest.fixture(params=KINDS)
def model(request):
    return make_model(request.param, d=2)


def test_euclidean_metric_is_identity():
    m = make_model("euclidean", d=3)
    ev = metric_at(m, ChartPoint(0, [0.1, -0.2, 0.3]))
    np.testing.assert_array_equal(ev.g, np.eye(3))
    np.testing.assert_array_equal(ev.dg, 0.0)
    np.testing.assert_array_equal(christoffel(m, ChartPoint(0, [0.1, 0.2, 0.0])), 0.0)


def test_sphere_metric_at_chart_origin():
    m = make_model("sphere", d=2)
    g = metric_at(m, ChartPoint(0, [0.0, 0.0])).g
    # stereographic factor 4 times the squared chart scale
    np.testing.assert_allclose(g, 4.0 * m.scale ** 2 * np.eye(2), rtol=1e-14)


def test_hyperbolic_conformal_factor():
    m = make_model("hyperbolic", d=2)
    x = np.array([0.5, 0.0])
    y = m.rho * x
    expected = 4.0 / (1.0 - y @ y) ** 2 * m.rho ** 2
    np.testing.assert_allclose(metric_at(m, ChartPoint(0, x)).g, expected * np.eye(2), rtol=1e-12)


def test_metric_matches_pullback_and_inverse(model):
    for p in sample_points(model, 20):
        ev = metric_at(model, p)
        np.testing.assert_allclose(ev.g @ ev.g_inv, np.eye(2), atol=1e-10)
        np.testing.assert_allclose(ev.g, pullback_metric_fd(model, p), rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(ev.dg, fd_metric_derivative(model, p), rtol=1e-5, atol=1e-6)


def test_christoffel_one_dimensional_exponential_metric():
    x = 0.3
    g_inv = np.array([[[math.exp(-2 * x)]]])
    dg = np.array([[[[2 * math.exp(2 * x)]]]])
    assert christoffel_from_metric(g_inv, dg)[0, 0, 0, 0] == pytest.approx(1.0, abs=1e-14)


def test_christoffel_symmetric_and_matches_oracles(model):
    for p in sample_points(model, 15, seed=1):
        G = christoffel(model, p)
        assert np.max(np.abs(G - np.swapaxes(G, 1, 2))) < 1e-10
        np.testing.assert_allclose(G, fd_christoffel(model, p), atol=1e-5)
        np.testing.assert_allclose(christoffel_derivative(model, p), fd_christoffel_derivative(model, p),
                                   atol=1e-4)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("d", [2, 3])
def test_conformal_shortcut_matches_generic_formula(kind, d):
    m = make_model(kind, d=d)
    rng = np.random.default_rng(3)
    x = rng.uniform(-0.5, 0.5, size=(30, d))
    chart = np.zeros(30, dtype=np.int64)
    fast = connection_batch(m, chart, x)
    slow = connection_batch_generic(m, chart, x)
    for a, b in zip(fast, slow):
        np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("d", [2, 3])
def test_constant_curvature_oracles(kind, d):
    m = make_model(kind, d=d)
    rep = curvature_report(m, n_samples=100, seed=d)
    assert rep.passed, rep.summary()
    assert rep["curvature.sectional_max_gap"].details["expected"] == SECTIONAL[kind]


def test_riemann_antisymmetry_and_ricci(model):
    for p in sample_points(model, 10, seed=2):
        R = riemann(model, p)
        np.testing.assert_allclose(R, -np.swapaxes(R, 2, 3), atol=1e-12)
        Ric = ricci(model, p)
        np.testing.assert_allclose(Ric, Ric.T, atol=1e-12)
        g = metric_at(model, p).g
        np.testing.assert_allclose(Ric, (model.d - 1) * SECTIONAL[model.kind] * g, atol=1e-6 * np.abs(g).max())


def test_sphere_ricci_in_three_dimensions():
    m = make_model("sphere", d=3)
    p = ChartPoint(1, [0.2, -0.1, 0.3])
    np.testing.assert_allclose(ricci(m, p), 2.0 * metric_at(m, p).g, atol=1e-8)


def test_sectional_values_and_degenerate_plane():
    S = make_model("sphere")
    H = make_model("hyperbolic")
    p = ChartPoint(0, [0.3, 0.1])
    assert sectional(S, p, [1.0, 0.0], [0.3, 1.0]) == pytest.approx(1.0, abs=1e-6)
    assert sectional(H, p, [1.0, 2.0], [0.0, 1.0]) == pytest.approx(-1.0, abs=1e-6)
    with pytest.raises(DegeneratePlane):
        sectional(S, p, [1.0, 1.0], [2.0, 2.0])


def test_point_outside_chart_rejected():
    m = make_model("sphere")
    with pytest.raises(PointOutsideChart):
        metric_at(m, ChartPoint(0, [0.8, 0.7]))
    with pytest.raises(PointOutsideChart):
        christoffel(m, ChartPoint(0, [1.0, 0.0]))


def test_transition_identity_and_sphere_inversion():
    S = make_model("sphere")
    x = np.array([0.3, 0.4])
    xb, J = transition(S, 0, 0, x)
    np.testing.assert_array_equal(xb, x)
    np.testing.assert_array_equal(J, np.eye(2))
    xb, _ = transition(S, 0, 1, x)
    np.testing.assert_allclose(xb, x / (S.scale ** 2 * (x @ x)), rtol=1e-14)
    back, _ = transition(S, 1, 0, xb)
    np.testing.assert_allclose(back, x, atol=1e-12)


def test_transition_not_in_overlap():
    S = make_model("sphere")
    with pytest.raises(NotInOverlap):
        transition(S, 0, 1, np.array([0.05, 0.0]))


def _overlap_pairs(model, n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for point in model.sample(4 * n, rng):
        inside = model.charts_containing(point, radius=0.95)
        if len(inside) >= 2:
            a, b = inside[:2]
            out.append((a, b, model.coords(np.array([a]), point[None])[0]))
        if len(out) == n:
            break
    return out


def test_transition_jacobian_matches_fd(model):
    step = 1e-6
    for a, b, x in _overlap_pairs(model, 10, seed=4):
        _, J = transition(model, a, b, x)
        fd = np.empty_like(J)
        for k in range(model.d):
            e = np.zeros(model.d)
            e[k] = step
            fd[:, k] = (model.transition_batch(np.array([a]), np.array([b]), (x + e)[None])[0][0]
                        - model.transition_batch(np.array([a]), np.array([b]), (x - e)[None])[0][0]) / (2 * step)
        assert np.max(np.abs(fd - J)) < 1e-6


def test_transition_cocycle_on_triple_overlaps():
    for kind in ["euclidean", "hyperbolic", "torus"]:
        m = make_model(kind)
        rng = np.random.default_rng(5)
        checked = 0
        for point in m.sample(3000, rng):
            inside = m.charts_containing(point, radius=0.97)
            if len(inside) < 3:
                continue
            a, b, c = inside[:3]
            x = m.coords(np.array([a]), point[None])[0]
            xb, Jab = transition(m, a, b, x)
            xc, Jbc = transition(m, b, c, xb)
            xa, Jca = transition(m, c, a, xc)
            assert np.max(np.abs(xa - x)) < 1e-10
            np.testing.assert_allclose(Jca @ Jbc @ Jab, np.eye(m.d), atol=1e-8)
            checked += 1
            if checked == 10:
                break
        assert checked > 0, kind


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 0.95), st.floats(0.0, 2 * math.pi))
def test_sphere_transition_round_trip(radius, angle):
    S = make_model("sphere")
    x = radius * np.array([math.cos(angle), math.sin(angle)])
    if np.linalg.norm(x) * S.scale ** 2 * np.linalg.norm(x) <= 1.0:
        return  # image falls outside the other chart ball
    xb, J = transition(S, 0, 1, x)
    back, Jb = transition(S, 1, 0, xb)
    np.testing.assert_allclose(back, x, atol=1e-12)
    np.testing.assert_allclose(Jb @ J, np.eye(2), atol=1e-10)


def test_uniform_atlas_reports(model):
    rep = verify_uniform_atlas(model, n_samples=300)
    assert rep.passed, rep.summary()


def test_sphere_small_shrink_radius_fails_cover():
    rep = verify_uniform_atlas(make_model("sphere", r=0.2), n_samples=300)
    assert not rep["atlas.cover_fraction"].passed
    assert not rep.passed


def test_bounded_geometry(model):
    rep = bounded_geometry_report(model, n_samples=60)
    assert rep.passed, rep.summary()
    if model.kind == "euclidean":
        assert rep["geometry.curvature_norm_sup"].value == 0.0
        assert rep["geometry.injectivity_radius"].value == math.inf


def test_christoffel_transformation_identity(model):
    assert christoffel_transformation_residual(model, n_samples=20) < 1e-6


def test_exact_distance_values():
    E = make_model("euclidean")
    S = make_model("sphere")
    T = make_model("torus")
    assert E.distance(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))[0] == pytest.approx(5.0)
    assert S.distance(np.array([[0, 0, 1.0]]), np.array([[1.0, 0, 0]]))[0] == pytest.approx(math.pi / 2, abs=1e-10)
    assert T.distance(np.array([[0.0, 0.0]]), np.array([[0.6, 0.0]]))[0] == pytest.approx(0.4, abs=1e-12)


def test_distance_metric_axioms(model):
    rng = np.random.default_rng(6)
    P, Q, R = (model.sample(50, rng) for _ in range(3))
    dPQ, dQP = model.distance(P, Q), model.distance(Q, P)
    np.testing.assert_allclose(dPQ, dQP, atol=1e-12)
    assert np.all(dPQ >= 0)
    np.testing.assert_allclose(model.distance(P, P), 0.0, atol=1e-7)
    assert np.all(dPQ <= model.distance(P, R) + model.distance(R, Q) + 1e-9)


def test_invalid_model_parameters():
    with pytest.raises(ValueError):
        make_model("sphere", r=1.5)
    with pytest.raises(ValueError):
        make_model("cube")
    with pytest.raises(ValueError):
        make_model("sphere").validate_chart(5)
