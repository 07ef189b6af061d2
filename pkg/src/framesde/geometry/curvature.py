"""Metric, Levi-Civita connection and curvature in chart coordinates.

Index conventions (leading batch axis n omitted):

    g[i, j]            g_ij
    dg[k, i, j]        d_k g_ij
    gamma[k, i, j]     Gamma^k_ij
    dgamma[n, k, i, j] d_n Gamma^k_ij
    riemann[l, i, j, k]  R^l_ijk  with R(d_j, d_k) d_i = R^l_ijk d_l
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegeneratePlane
from .models import ChartPoint, ManifoldModel, check_in_chart

FD_STEP = 1e-6


@dataclass(frozen=True)
class MetricEval:
    g: np.ndarray
    g_inv: np.ndarray
    dg: np.ndarray


@dataclass(frozen=True)
class CurvatureEval:
    riemann: np.ndarray
    ricci: np.ndarray


# -- batched kernels ---------------------------------------------------------


def christoffel_from_metric(g_inv, dg):
    """Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)."""
    # lower[n, l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    lower = (np.einsum("nijl->nlij", dg) + np.einsum("njil->nlij", dg) - np.einsum("nlij->nlij", dg))
    return 0.5 * np.einsum("nkl,nlij->nkij", g_inv, lower)


def connection_batch(model: ManifoldModel, chart, x, derivatives: bool = True):
    """Metric, inverse metric, Christoffel symbols and (optionally) their first derivatives.

    Everything is analytic. For g = w I with u = d(log w):
        Gamma^k_ij = (delta_kj u_i + delta_ki u_j - delta_ij u_k) / 2
    and d Gamma follows by differentiating u. ``dgamma`` is None when
    ``derivatives`` is false.
    """
    w, dw, d2w = model.conformal(chart, x)
    d = x.shape[-1]
    eye = np.eye(d)
    g = w[:, None, None] * eye
    g_inv = (1.0 / w)[:, None, None] * eye
    dg = dw[:, :, None, None] * eye
    u = dw / w[:, None]
    gamma = 0.5 * (eye[None, :, None, :] * u[:, None, :, None]
                   + eye[None, :, :, None] * u[:, None, None, :]
                   - eye[None, None, :, :] * u[:, :, None, None])
    if not derivatives:
        return g, g_inv, dg, gamma, None
    du = d2w / w[:, None, None] - np.einsum("na,ni->nai", dw, dw) / (w ** 2)[:, None, None]
    dgamma = 0.5 * (eye[None, None, :, None, :] * du[:, :, None, :, None]
                    + eye[None, None, :, :, None] * du[:, :, None, None, :]
                    - eye[None, None, None, :, :] * du[:, :, :, None, None])
    return g, g_inv, dg, gamma, dgamma


def connection_batch_generic(model: ManifoldModel, chart, x):
    """Same outputs as ``connection_batch`` from the general coordinate formulas.

    Works for any metric given g, dg, d2g; used to cross-check the conformal shortcut.
    """
    g, dg, d2g = model.metric_derivs(chart, x)
    g_inv = np.linalg.inv(g)
    gamma = christoffel_from_metric(g_inv, dg)
    lower = (np.einsum("nijl->nlij", dg) + np.einsum("njil->nlij", dg) - np.einsum("nlij->nlij", dg))
    # d_a of lower[l, i, j]
    dlower = (np.einsum("naijl->nalij", d2g) + np.einsum("najil->nalij", d2g)
              - np.einsum("nalij->nalij", d2g))
    dginv = -np.einsum("nkp,napq,nql->nakl", g_inv, dg, g_inv)
    dgamma = 0.5 * (np.einsum("nakl,nlij->nakij", dginv, lower)
                    + np.einsum("nkl,nalij->nakij", g_inv, dlower))
    return g, g_inv, dg, gamma, dgamma


def riemann_from_connection(gamma, dgamma):
    """R^l_ijk = d_j Gamma^l_ik - d_k Gamma^l_ij + Gamma^l_jm Gamma^m_ik - Gamma^l_km Gamma^m_ij."""
    return (np.einsum("njlik->nlijk", dgamma)
            - np.einsum("nklij->nlijk", dgamma)
            + np.einsum("nljm,nmik->nlijk", gamma, gamma)
            - np.einsum("nlkm,nmij->nlijk", gamma, gamma))


def ricci_from_riemann(R):
    """Ric_ij = R^k_ikj."""
    return np.einsum("nkikj->nij", R)


def metric_compatibility_residual(g, dg, gamma):
    """d_k g_ij - g_il Gamma^l_jk - g_lj Gamma^l_ik, indexed [n, k, i, j]."""
    return (dg - np.einsum("nil,nljk->nkij", g, gamma) - np.einsum("nlj,nlik->nkij", g, gamma))


def riemann_batch(model, chart, x):
    _, _, _, gamma, dgamma = connection_batch(model, chart, x)
    return riemann_from_connection(gamma, dgamma)


# -- single point operations ------------------------------------------------


def _point(model, p: ChartPoint):
    check_in_chart(p.x)
    model.validate_chart(p.chart)
    return np.array([p.chart]), p.x[None, :]


def metric_at(model: ManifoldModel, p: ChartPoint) -> MetricEval:
    c, x = _point(model, p)
    g, dg, _ = model.metric_derivs(c, x)
    return MetricEval(g=g[0], g_inv=np.linalg.inv(g[0]), dg=dg[0])


def christoffel(model: ManifoldModel, p: ChartPoint) -> np.ndarray:
    c, x = _point(model, p)
    return connection_batch(model, c, x)[3][0]


def christoffel_derivative(model: ManifoldModel, p: ChartPoint) -> np.ndarray:
    c, x = _point(model, p)
    return connection_batch(model, c, x)[4][0]


def riemann(model: ManifoldModel, p: ChartPoint) -> np.ndarray:
    c, x = _point(model, p)
    return riemann_batch(model, c, x)[0]


def ricci(model: ManifoldModel, p: ChartPoint) -> np.ndarray:
    return ricci_from_riemann(riemann(model, p)[None])[0]


def curvature_at(model: ManifoldModel, p: ChartPoint) -> CurvatureEval:
    R = riemann(model, p)
    return CurvatureEval(riemann=R, ricci=ricci_from_riemann(R[None])[0])


def sectional(model: ManifoldModel, p: ChartPoint, u, v) -> float:
    """g(R(u, v) v, u) / (g(u, u) g(v, v) - g(u, v)^2)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    g = metric_at(model, p).g
    gram = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
    scale = (u @ u) * (v @ v)
    if scale == 0.0 or gram / scale < 1e-12:
        raise DegeneratePlane("u and v are linearly dependent")
    R = riemann(model, p)
    Ruvv = np.einsum("lijk,i,j,k->l", R, v, u, v)
    return float(Ruvv @ g @ u / gram)


# -- finite-difference oracles ------------------------------------------------


def fd_metric_derivative(model, p: ChartPoint, step: float = FD_STEP) -> np.ndarray:
    """Central differences of g, indexed like MetricEval.dg."""
    c, x = _point(model, p)
    out = np.empty((model.d, model.d, model.d))
    for k in range(model.d):
        e = np.zeros(model.d)
        e[k] = step
        gp = model.metric_derivs(c, x + e)[0][0]
        gm = model.metric_derivs(c, x - e)[0][0]
        out[k] = (gp - gm) / (2 * step)
    return out


def fd_christoffel(model, p: ChartPoint, step: float = FD_STEP) -> np.ndarray:
    """Christoffel symbols from a finite-difference metric derivative."""
    dg = fd_metric_derivative(model, p, step)
    g_inv = metric_at(model, p).g_inv
    return christoffel_from_metric(g_inv[None], dg[None])[0]


def fd_christoffel_derivative(model, p: ChartPoint, step: float = 1e-5) -> np.ndarray:
    c, x = _point(model, p)
    out = np.empty((model.d,) * 4)
    for n in range(model.d):
        e = np.zeros(model.d)
        e[n] = step
        gp = connection_batch(model, c, x + e)[3][0]
        gm = connection_batch(model, c, x - e)[3][0]
        out[n] = (gp - gm) / (2 * step)
    return out


def pullback_metric_fd(model, p: ChartPoint, step: float = FD_STEP) -> np.ndarray:
    """Metric obtained by differentiating the embedding numerically.

    Independent of the closed-form conformal factor: uses only ``embed``
    and the ambient inner product.
    """
    c, x = _point(model, p)
    cols = []
    for k in range(model.d):
        e = np.zeros(model.d)
        e[k] = step
        cols.append((model.embed(c, x + e)[0] - model.embed(c, x - e)[0]) / (2 * step))
    J = np.stack(cols, axis=-1)
    sig = np.ones(model.ambient_dim) if model.ambient_signature is None else model.ambient_signature
    return np.einsum("ai,a,aj->ij", J, sig, J)


def tensor_norm(T, n_upper: int, g, g_inv) -> np.ndarray:
    """Pointwise g-norm of a batch of tensors T[n, up..., low...].

    The first ``n_upper`` index slots (after the batch axis) are contravariant
    and are contracted with g; the remaining slots with g^-1.
    """
    S = T
    rank = T.ndim - 1
    for slot in range(rank):
        metric = g if slot < n_upper else g_inv
        S = np.moveaxis(np.einsum("nab,n...b->n...a", metric, np.moveaxis(S, slot + 1, -1)), -1, slot + 1)
    sq = np.sum((S * T).reshape(T.shape[0], -1), axis=-1)
    return np.sqrt(np.maximum(sq, 0.0))


def covariant_derivative_riemann(model, chart, x, step: float = 1e-4) -> np.ndarray:
    """(nabla R)[n, l, i, j, k, a] = nabla_a R^l_ijk; partials by central differences."""
    _, _, _, gamma, _ = connection_batch(model, chart, x)
    R = riemann_batch(model, chart, x)
    dR = np.empty(R.shape + (model.d,))
    for a in range(model.d):
        e = np.zeros(model.d)
        e[a] = step
        dR[..., a] = (riemann_batch(model, chart, x + e) - riemann_batch(model, chart, x - e)) / (2 * step)
    return (dR
            + np.einsum("nlam,nmijk->nlijka", gamma, R)
            - np.einsum("nmai,nlmjk->nlijka", gamma, R)
            - np.einsum("nmaj,nlimk->nlijka", gamma, R)
            - np.einsum("nmak,nlijm->nlijka", gamma, R))
