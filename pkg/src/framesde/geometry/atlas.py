"""Sampling checks of the uniform-regularity and bounded-geometry properties."""

from __future__ import annotations

import math

import numpy as np

from ..report import VerificationReport
from .curvature import (connection_batch, covariant_derivative_riemann, metric_compatibility_residual,
                        riemann_from_connection, tensor_norm)
from .models import ManifoldModel


def _chart_samples(model, n, rng, radius=1.0):
    """Random chart ids (charts of sampled manifold points) and uniform points of radius*B."""
    P = model.sample(n, rng)
    chart = model.partition_chart(P) if model.chart_ids() is None else \
        rng.integers(0, len(model.chart_ids()), size=n)
    v = rng.standard_normal((n, model.d))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    rad = radius * rng.uniform(0.0, 1.0, size=n) ** (1.0 / model.d)
    return np.asarray(chart, dtype=np.int64), v * rad[:, None]


def verify_uniform_atlas(model: ManifoldModel, n_samples: int = 1000, seed: int = 0) -> VerificationReport:
    """Cover, multiplicity, metric equivalence and transition bounds on samples.

    Failures are report entries, never exceptions.
    """
    rng = np.random.default_rng(seed)
    P = model.sample(n_samples, rng)
    covered = 0
    mult = 0
    c0 = 0.0
    c1 = 0.0
    for point in P:
        ids, norms = model.chart_norms(point)
        inside = [int(c) for c in ids[norms < 1.0]]
        mult = max(mult, len(inside))
        if np.any(norms < model.r):
            covered += 1
        if len(inside) > 1:
            a = inside[0]
            others = np.array(inside[1:], dtype=np.int64)
            x = model.coords(np.full(len(others) + 1, a), np.repeat(point[None], len(others) + 1, 0))[:1]
            xb, J = model.transition_batch(np.full(len(others), a), others, np.repeat(x, len(others), 0))
            c0 = max(c0, float(np.max(np.linalg.norm(xb, axis=-1))))
            c1 = max(c1, float(np.max(np.linalg.norm(J, ord=2, axis=(1, 2)))))

    chart, x = _chart_samples(model, n_samples, rng, radius=1.0 - 1e-9)
    g = model.metric_derivs(chart, x)[0]
    eig = np.linalg.eigvalsh(g)

    rep = VerificationReport(meta={"model": repr(model), "n_samples": n_samples, "seed": seed})
    rep.add("atlas.cover_fraction", covered / n_samples, target=1.0, tol=0.0, rule="abs",
            r=model.r)
    rep.add("atlas.multiplicity", mult, target=model.multiplicity, rule="le")
    rep.add("atlas.metric_equivalence", [float(eig.min()), float(eig.max())],
            target=[1.0 / model.K, model.K], tol=0.0, rule="range", K=model.K)
    rep.add("atlas.transition_sup_norm", c0, target=math.inf, rule="le")
    rep.add("atlas.transition_jacobian_sup_norm", c1, target=math.inf, rule="le")
    return rep


def bounded_geometry_report(model: ManifoldModel, n_samples: int = 200, k_max: int = 1,
                            seed: int = 0) -> VerificationReport:
    """Sampled sup of |R|_g (and |nabla R|_g for k_max >= 1) plus injectivity radius.

    Gallery models have constant curvature kappa, so |R|_g must equal
    |kappa| sqrt(2 d (d - 1)) everywhere and nabla R must vanish.
    """
    rng = np.random.default_rng(seed)
    chart, x = _chart_samples(model, n_samples, rng, radius=0.95)
    g, g_inv, _, gamma, dgamma = connection_batch(model, chart, x)
    R = riemann_from_connection(gamma, dgamma)
    normR = tensor_norm(R, 1, g, g_inv)
    kappa = model.sectional_constant
    expected = abs(kappa) * math.sqrt(2.0 * model.d * (model.d - 1))

    rep = VerificationReport(meta={"model": repr(model), "n_samples": n_samples, "k_max": k_max,
                                   "seed": seed})
    rep.add("geometry.curvature_norm_sup", float(normR.max()), target=expected, tol=1e-6)
    rep.add("geometry.curvature_norm_variation", float(normR.max() - normR.min()), target=0.0,
            tol=1e-6)
    if k_max >= 1:
        nablaR = covariant_derivative_riemann(model, chart, x)
        normDR = tensor_norm(nablaR, 1, g, g_inv)
        rep.add("geometry.nabla_curvature_norm_sup", float(normDR.max()), target=0.0, tol=1e-5)
    rep.add("geometry.injectivity_radius", model.injectivity_radius, target=0.0, rule="gt")
    return rep


def christoffel_transformation_residual(model: ManifoldModel, n_samples: int = 50, seed: int = 0,
                                        step: float = 1e-5) -> float:
    """Max gap between native Christoffel symbols of a target chart and the transformed ones.

    Gamma_bar^j_pq = (dxb^j/dx^m) Gamma^m_il (dx^i/dxb^q)(dx^l/dxb^p)
                     + (d^2 x^l / dxb^p dxb^q)(dxb^j/dx^l)
    where xb are target-chart coordinates. The second derivatives of the
    inverse transition come from central differences of its analytic Jacobian.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    tried = 0
    while tried < n_samples:
        P = model.sample(1, rng)
        inside = model.charts_containing(P[0], radius=0.95)
        if len(inside) < 2:
            continue
        a, b = (int(c) for c in rng.choice(inside, size=2, replace=False))
        tried += 1
        ca, cb = np.array([a]), np.array([b])
        x = model.coords(ca, P)
        xb, J = model.transition_batch(ca, cb, x)
        _, Jinv = model.transition_batch(cb, ca, xb)
        J, Jinv = J[0], Jinv[0]
        hess = np.empty((model.d,) * 3)  # hess[l, p, q] = d^2 x^l / dxb^p dxb^q
        for p in range(model.d):
            e = np.zeros(model.d)
            e[p] = step
            jp = model.transition_batch(cb, ca, xb + e)[1][0]
            jm = model.transition_batch(cb, ca, xb - e)[1][0]
            hess[:, p, :] = (jp - jm) / (2 * step)
        gamma_a = connection_batch(model, ca, x)[3][0]
        gamma_b = connection_batch(model, cb, xb)[3][0]
        pushed = (np.einsum("jm,mil,iq,lp->jpq", J, gamma_a, Jinv, Jinv)
                  + np.einsum("lpq,jl->jpq", hess, J))
        worst = max(worst, float(np.abs(pushed - gamma_b).max()))
    return worst


def curvature_report(model: ManifoldModel, n_samples: int = 200, seed: int = 0,
                     sectional_tol: float = 1e-6, identity_tol: float = 1e-8) -> VerificationReport:
    """Sectional curvature on random planes, metric compatibility and first Bianchi identity.

    The metric derivatives come from the model's own analytic formulas, the
    connection from the conformal shortcut, so compatibility is a genuine
    cross-check of two code paths.
    """
    rng = np.random.default_rng(seed)
    chart, x = _chart_samples(model, n_samples, rng, radius=0.95)
    g, dg, _ = model.metric_derivs(chart, x)
    _, _, _, gamma, dgamma = connection_batch(model, chart, x)
    R = riemann_from_connection(gamma, dgamma)

    u = rng.standard_normal((n_samples, model.d))
    v = rng.standard_normal((n_samples, model.d))
    guu = np.einsum("ni,nij,nj->n", u, g, u)
    gvv = np.einsum("ni,nij,nj->n", v, g, v)
    guv = np.einsum("ni,nij,nj->n", u, g, v)
    Ruvv = np.einsum("nlijk,ni,nj,nk->nl", R, v, u, v)
    K = np.einsum("nl,nlm,nm->n", Ruvv, g, u) / (guu * gvv - guv ** 2)

    compat = metric_compatibility_residual(g, dg, gamma)
    bianchi = R + np.einsum("nljki->nlijk", R) + np.einsum("nlkij->nlijk", R)

    rep = VerificationReport(meta={"model": repr(model), "n_samples": n_samples, "seed": seed})
    kappa = model.sectional_constant
    rep.add("curvature.sectional_max_gap", float(np.max(np.abs(K - kappa))), target=sectional_tol,
            rule="le", expected=kappa)
    rep.add("curvature.metric_compatibility", float(np.max(np.abs(compat))), target=identity_tol, rule="le")
    rep.add("curvature.first_bianchi", float(np.max(np.abs(bianchi))), target=identity_tol, rule="le")
    return rep
