import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framesde.errors import PointOutsideChart
from framesde.fields import (AmbientConstant, AmbientRotation, ChartConstantTensor, ChartConstantVector,
                             IdentityTensor, ScaledIdentity, ZeroTensor, ZeroVector, covariant_derivative_11,
                             covariant_derivative_vector_batch, covariant_norms, generator_data, tensor_sup_norm,
                             transform_field)
from framesde.geometry import ChartPoint, christoffel, connection_batch, make_model, metric_at, tensor_norm

KINDS = ["euclidean", "sphere", "hyperbolic", "torus"]


def overlap_point(model, seed=0):
    rng = np.random.default_rng(seed)
    for point in model.sample(2000, rng):
        inside = model.charts_containing(point, radius=0.9)
        if len(inside) >= 2:
            a, b = inside[:2]
            return a, b, model.coords(np.array([a]), point[None])[0]
    raise AssertionError("no overlap point")


@pytest.mark.parametrize("kind", KINDS)
def test_identity_covariant_derivative_is_exactly_zero(kind):
    m = make_model(kind)
    for x in ([0.0, 0.0], [0.3, -0.5], [0.7, 0.1]):
        assert np.max(np.abs(covariant_derivative_11(IdentityTensor(), m, 0.0, ChartPoint(0, x)))) < 1e-14


def test_constant_tensor_on_euclidean_has_zero_derivative():
    E = make_model("euclidean")
    A = ChartConstantTensor(((1.0, 2.0), (0.5, -1.0)))
    np.testing.assert_array_equal(covariant_derivative_11(A, E, 0.0, ChartPoint(0, [0.2, 0.3])), 0.0)


def test_scaled_identity_derivative_is_gradient_times_identity():
    S = make_model("sphere")
    A = ScaledIdentity(1.5, 0.4, 2)
    p = ChartPoint(0, np.array([0.3, -0.2]))
    nab = covariant_derivative_11(A, S, 0.0, p)
    step = 1e-6
    grad = np.empty(2)
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        fp = A(S, 0.0, ChartPoint(0, p.x + e))[0, 0]
        fm = A(S, 0.0, ChartPoint(0, p.x - e))[0, 0]
        grad[j] = (fp - fm) / (2 * step)
    expected = np.einsum("ik,j->ikj", np.eye(2), grad)
    assert np.max(np.abs(nab - expected)) < 1e-5


def test_generator_identity_euclidean_and_scaling():
    E = make_model("euclidean", d=3)
    p = ChartPoint(0, [0.1, 0.2, -0.3])
    gd = generator_data(IdentityTensor(), ZeroVector(), E, 0.0, p)
    np.testing.assert_array_equal(gd.sigma, np.eye(3))
    np.testing.assert_array_equal(gd.drift_correction, 0.0)
    gd2 = generator_data(ScaledIdentity(2.0), ZeroVector(), E, 0.0, p)
    np.testing.assert_allclose(gd2.sigma, 4.0 * np.eye(3), rtol=1e-15)


@pytest.mark.parametrize("kind", ["sphere", "hyperbolic"])
def test_generator_identity_is_laplace_beltrami(kind):
    m = make_model(kind)
    p = ChartPoint(0, [0.2, 0.35])
    gd = generator_data(IdentityTensor(), ZeroVector(), m, 0.0, p)
    ev = metric_at(m, p)
    G = christoffel(m, p)
    np.testing.assert_allclose(gd.sigma, ev.g_inv, rtol=1e-14)
    np.testing.assert_allclose(gd.drift_correction, -0.5 * np.einsum("kj,lkj->l", ev.g_inv, G), atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(KINDS), st.floats(-0.8, 0.8), st.floats(-0.5, 0.5), st.floats(-0.9, 0.9))
def test_sigma_symmetric_psd(kind, x0, x1, amp):
    m = make_model(kind)
    A = ChartConstantTensor(((1.0, amp), (0.3, -0.4)))
    sigma = generator_data(A, ZeroVector(), m, 0.0, ChartPoint(0, [x0, x1])).sigma
    assert np.max(np.abs(sigma - sigma.T)) < 1e-12
    assert np.linalg.eigvalsh(sigma).min() >= -1e-10


def test_generator_rejects_outside_point():
    with pytest.raises(PointOutsideChart):
        generator_data(IdentityTensor(), ZeroVector(), make_model("sphere"), 0.0, ChartPoint(0, [1.0, 0.5]))


@pytest.mark.parametrize("kind", KINDS)
def test_tensoriality_of_builtin_fields(kind):
    m = make_model(kind)
    a, b, x = overlap_point(m, seed=1)
    xb = m.transition_batch(np.array([a]), np.array([b]), x[None])[0][0]
    D = m.ambient_dim
    fields = [IdentityTensor(), ScaledIdentity(1.0, 0.3, 0), AmbientConstant(tuple(np.linspace(0.2, 0.5, D))),
              AmbientRotation(0.7, (D - 2, D - 1))]
    for f in fields:
        pushed = transform_field(f, m, a, b, 0.0, x)
        native = f(m, 0.0, ChartPoint(b, xb))
        assert np.max(np.abs(pushed - native)) < 1e-8, f


def test_transform_field_trivial_cases():
    S = make_model("sphere")
    x = np.array([0.5, 0.4])
    B = AmbientRotation(1.0)
    np.testing.assert_array_equal(transform_field(B, S, 0, 0, 0.0, x), B(S, 0.0, ChartPoint(0, x)))
    np.testing.assert_allclose(transform_field(IdentityTensor(), S, 0, 1, 0.0, x), np.eye(2), atol=1e-14)
    xb = S.transition_batch(np.array([0]), np.array([1]), x[None])[0][0]
    there = transform_field(B, S, 0, 1, 0.0, x)
    _, J = S.transition_batch(np.array([1]), np.array([0]), xb[None])
    np.testing.assert_allclose(J[0] @ there, B(S, 0.0, ChartPoint(0, x)), atol=1e-10)


def test_chart_constant_field_is_not_tensorial():
    S = make_model("sphere")
    a, b, x = overlap_point(S)
    A = ChartConstantTensor(((1.0, 0.5), (0.0, 1.0)))
    xb = S.transition_batch(np.array([a]), np.array([b]), x[None])[0][0]
    gap = np.abs(transform_field(A, S, a, b, 0.0, x) - A(S, 0.0, ChartPoint(b, xb))).max()
    assert gap > 1e-3
    assert A.tensorial is False


def test_sup_norm_examples():
    E = make_model("euclidean")
    assert tensor_sup_norm(IdentityTensor(), E, 0, n_samples=20) == pytest.approx(math.sqrt(2.0), rel=1e-14)
    for k in (0, 1, 2):
        assert tensor_sup_norm(ZeroTensor(), make_model("sphere"), k, n_samples=20) == 0.0
    T = make_model("torus")
    v = (0.3, -0.4)
    # torus charts carry a constant conformal factor s^2
    expected = 0.5 * T.scale
    assert tensor_sup_norm(ChartConstantVector(v), T, 0, n_samples=20) == pytest.approx(expected, rel=1e-12)
    assert tensor_sup_norm(ChartConstantVector(v), T, 2, n_samples=20) == pytest.approx(expected, rel=1e-12)


def test_identity_norm_is_sqrt_d_on_curved_models():
    for kind in ("sphere", "hyperbolic"):
        assert tensor_sup_norm(IdentityTensor(), make_model(kind, d=3), 1, n_samples=30) == \
            pytest.approx(math.sqrt(3.0), rel=1e-12)


@pytest.mark.parametrize("kind", ["sphere", "hyperbolic"])
def test_norms_are_chart_invariant(kind):
    m = make_model(kind)
    f = ScaledIdentity(1.0, 0.5, 1)
    n1 = covariant_norms(f, m, 2, n_samples=40, seed=3, chart_choice="partition")
    n2 = covariant_norms(f, m, 2, n_samples=40, seed=3, chart_choice="random")
    for a, b in zip(n1, n2):
        np.testing.assert_allclose(a, b, rtol=1e-2, atol=1e-6)


def test_killing_field_has_antisymmetric_covariant_derivative():
    # rotation about the polar axis: g(nabla B) is antisymmetric and |nabla B|_g = sqrt(2) |z|
    S = make_model("sphere")
    B = AmbientRotation(1.0, (0, 1))
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.5, 0.5, size=(25, 2))
    chart = np.zeros(25, dtype=np.int64)
    g, g_inv, _, gamma, _ = connection_batch(S, chart, x)
    b, db = B.evaluate(S, 0.0, chart, x)
    nab = covariant_derivative_vector_batch(b, db, gamma)
    low = np.einsum("nil,nlj->nij", g, nab)
    assert np.max(np.abs(low + np.swapaxes(low, 1, 2))) < 1e-6 * np.abs(low).max()
    z = S.embed(chart, x)[:, 2]
    np.testing.assert_allclose(tensor_norm(nab, 1, g, g_inv), math.sqrt(2.0) * np.abs(z), rtol=1e-6)
