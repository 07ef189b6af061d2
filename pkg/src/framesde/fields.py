"""Coefficient fields A (a (1,1)-tensor) and B (a vector field) in chart coordinates.

Fields are evaluated in batches: ``evaluate(model, t, chart, x)`` returns the
coefficients and their first partials for every row of ``x``:

    TensorField11:  a[n, i, l] = a^i_l,   da[n, k, i, l] = d_k a^i_l
    VectorField:    b[n, i]    = b^i,     db[n, k, i]    = d_k b^i

All built-ins are time-autonomous; ``t`` is accepted so that time-dependent
fields can be added behind the same contract. Fields must have bounded
second covariant derivatives for well-posedness; this is the author's
responsibility and is not checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry.curvature import connection_batch, tensor_norm
from .geometry.models import ChartPoint, ManifoldModel, check_in_chart

FD_STEP = 1e-6


def _fd_partials(fn, x, step=FD_STEP):
    """Central differences of a batched function, stacked as out[n, k, ...]."""
    cols = []
    for k in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[k] = step
        cols.append((fn(x + e) - fn(x - e)) / (2.0 * step))
    return np.stack(cols, axis=1)


def tangent_components(model: ManifoldModel, chart, x, V):
    """Chart components of the tangential part of ambient vectors V at embed(chart, x).

    Uses b = g^-1 J^T eta V, where J is the embedding Jacobian and eta the
    ambient metric; exact for tangent V since the embeddings are isometric.
    """
    J = model.embed_jacobian(chart, x)
    eta = np.ones(model.ambient_dim) if model.ambient_signature is None else model.ambient_signature
    w = model.conformal(chart, x)[0]
    return np.einsum("nai,a,na->ni", J, eta, V) / w[:, None]


# -- (1,1)-tensor fields -------------------------------------------------------


class TensorField11:
    name = "tensor"
    tensorial = True

    def evaluate(self, model, t, chart, x):
        raise NotImplementedError

    def __call__(self, model, t, p: ChartPoint):
        a, _ = self.evaluate(model, t, np.array([p.chart]), p.x[None, :])
        return a[0]


class IdentityTensor(TensorField11):
    """The identity endomorphism; drives Brownian motion."""

    name = "identity"

    def evaluate(self, model, t, chart, x):
        n, d = x.shape
        return np.broadcast_to(np.eye(d), (n, d, d)).copy(), np.zeros((n, d, d, d))


@dataclass(frozen=True)
class ScaledIdentity(TensorField11):
    """f(P) * identity with f(P) = scale * (1 + amplitude * tanh(P[axis])).

    P is the ambient point, so f is a genuine function on the manifold.
    """

    scale: float = 1.0
    amplitude: float = 0.0
    axis: int = 0
    name = "scaled_identity"

    def profile(self, model, chart, x):
        P = model.embed(chart, x)
        f = self.scale * (1.0 + self.amplitude * np.tanh(P[:, self.axis]))
        dfdP = self.scale * self.amplitude / np.cosh(P[:, self.axis]) ** 2
        df = dfdP[:, None] * model.embed_jacobian(chart, x)[:, self.axis, :]
        return f, df

    def evaluate(self, model, t, chart, x):
        n, d = x.shape
        f, df = self.profile(model, chart, x)
        eye = np.eye(d)
        return f[:, None, None] * eye, df[:, :, None, None] * eye


@dataclass(frozen=True)
class ChartConstantTensor(TensorField11):
    """Same coefficient matrix in every chart. Not a tensor field in general."""

    matrix: tuple
    name = "chart_constant"
    tensorial = False

    def evaluate(self, model, t, chart, x):
        n, d = x.shape
        m = np.asarray(self.matrix, dtype=float).reshape(d, d)
        return np.broadcast_to(m, (n, d, d)).copy(), np.zeros((n, d, d, d))


class ZeroTensor(TensorField11):
    name = "zero"

    def evaluate(self, model, t, chart, x):
        n, d = x.shape
        return np.zeros((n, d, d)), np.zeros((n, d, d, d))


# -- vector fields -------------------------------------------------------------


class VectorField:
    name = "vector"
    tensorial = True

    def components(self, model, t, chart, x):
        raise NotImplementedError

    def evaluate(self, model, t, chart, x):
        b = self.components(model, t, chart, x)
        db = _fd_partials(lambda y: self.components(model, t, chart, y), x)
        return b, db

    def __call__(self, model, t, p: ChartPoint):
        return self.components(model, t, np.array([p.chart]), p.x[None, :])[0]


class ZeroVector(VectorField):
    name = "zero"

    def components(self, model, t, chart, x):
        return np.zeros_like(x)

    def evaluate(self, model, t, chart, x):
        return np.zeros_like(x), np.zeros(x.shape + (x.shape[1],))


@dataclass(frozen=True)
class AmbientConstant(VectorField):
    """Tangential part of a constant ambient vector (constant on flat models)."""

    vector: tuple
    name = "constant"

    def components(self, model, t, chart, x):
        V = np.broadcast_to(np.asarray(self.vector, dtype=float), (x.shape[0], model.ambient_dim))
        return tangent_components(model, chart, x, V)


@dataclass(frozen=True)
class AmbientRotation(VectorField):
    """Infinitesimal rotation omega in the ambient (i, j) coordinate plane.

    A Killing field on the sphere, Euclidean space, and hyperbolic space
    (for spatial i, j >= 1). Orbits on S^2 with plane (0, 1) are latitude circles.
    """

    omega: float = 1.0
    plane: tuple = (0, 1)
    name = "rotation"

    def ambient(self, P):
        i, j = self.plane
        V = np.zeros_like(P)
        V[:, i] = -self.omega * P[:, j]
        V[:, j] = self.omega * P[:, i]
        return V

    def components(self, model, t, chart, x):
        return tangent_components(model, chart, x, self.ambient(model.embed(chart, x)))


@dataclass(frozen=True)
class ChartConstantVector(VectorField):
    vector: tuple
    name = "chart_constant"
    tensorial = False

    def components(self, model, t, chart, x):
        return np.broadcast_to(np.asarray(self.vector, dtype=float), x.shape).copy()

    def evaluate(self, model, t, chart, x):
        return self.components(model, t, chart, x), np.zeros(x.shape + (x.shape[1],))


# -- operations ----------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorData:
    sigma: np.ndarray
    drift_correction: np.ndarray
    full_drift: np.ndarray


def covariant_derivative_11_batch(a, da, gamma):
    """(nabla A)[n, i, k, j] = d_j a^i_k + Gamma^i_jl a^l_k - Gamma^l_jk a^i_l."""
    return (np.einsum("njik->nikj", da)
            + np.einsum("nijl,nlk->nikj", gamma, a)
            - np.einsum("nljk,nil->nikj", gamma, a))


def covariant_derivative_vector_batch(b, db, gamma):
    """(nabla B)[n, i, j] = d_j b^i + Gamma^i_jl b^l."""
    return np.einsum("nji->nij", db) + np.einsum("nijl,nl->nij", gamma, b)


def covariant_derivative_11(A: TensorField11, model: ManifoldModel, t, p: ChartPoint):
    check_in_chart(p.x)
    c, x = np.array([p.chart]), p.x[None, :]
    a, da = A.evaluate(model, t, c, x)
    gamma = connection_batch(model, c, x)[3]
    return covariant_derivative_11_batch(a, da, gamma)[0]


def generator_data_batch(a, da, b, g_inv, gamma):
    """Diffusion tensor and drift of the generator on functions.

    sigma^ij = a^i_k g^kl a^j_l
    correction^i = 1/2 (d_j a^i_l a^j_k g^kl - a^i_l g^nj a^k_n Gamma^l_kj)
    """
    sigma = np.einsum("nik,nkl,njl->nij", a, g_inv, a)
    corr = 0.5 * (np.einsum("njil,njk,nkl->ni", da, a, g_inv)
                  - np.einsum("nil,nlkj,nkq,nqj->ni", a, gamma, a, g_inv))
    return sigma, corr, b + corr


def generator_data(A: TensorField11, B: VectorField, model: ManifoldModel, t, p: ChartPoint) -> GeneratorData:
    check_in_chart(p.x)
    c, x = np.array([p.chart]), p.x[None, :]
    a, da = A.evaluate(model, t, c, x)
    b, _ = B.evaluate(model, t, c, x)
    _, g_inv, _, gamma, _ = connection_batch(model, c, x)
    sigma, corr, full = generator_data_batch(a, da, b, g_inv, gamma)
    return GeneratorData(sigma=sigma[0], drift_correction=corr[0], full_drift=full[0])


def transform_field(field, model: ManifoldModel, frm: int, to: int, t, x):
    """Push field coefficients at chart-``frm`` point x into chart ``to``.

    (1,1)-tensors: a_bar = J a J^-1; vectors: b_bar = J b.
    """
    from .geometry.models import transition

    x = np.asarray(x, dtype=float)
    _, J = transition(model, frm, to, x)
    c = np.array([frm])
    if isinstance(field, TensorField11):
        a, _ = field.evaluate(model, t, c, x[None, :])
        return J @ a[0] @ np.linalg.inv(J)
    b, _ = field.evaluate(model, t, c, x[None, :])
    return J @ b[0]


def _sample_chart_points(model, n, rng, chart_choice):
    P = model.sample(n, rng)
    if chart_choice == "partition":
        chart = model.partition_chart(P)
    elif chart_choice == "random":
        chart = np.array([int(rng.choice(model.charts_containing(p, radius=0.95) or
                                         [int(model.partition_chart(p[None])[0])]))
                          for p in P], dtype=np.int64)
    else:
        raise ValueError("chart_choice must be 'partition' or 'random'")
    return chart, model.coords(chart, P)


def _second_covariant(fn_first, x, gamma):
    """Covariant derivative of a batched tensor-valued function of x with one upper slot.

    ``fn_first(x)`` returns T[n, i, lows...]; partials by central differences.
    Returns [n, i, lows..., m].
    """
    T = fn_first(x)
    dT = np.moveaxis(_fd_partials(fn_first, x, step=1e-5), 1, -1)
    out = dT + np.einsum("nimp,np...->ni...m", gamma, T)
    nlow = T.ndim - 2
    for s in range(nlow):
        slot = s + 2
        Tm = np.moveaxis(T, slot, -1)
        corr = np.einsum("nlmk,n...l->n...km", gamma, Tm)
        corr = np.moveaxis(corr, -2, slot)
        out = out - corr
    return out


def covariant_norms(field, model: ManifoldModel, order: int = 0, n_samples: int = 200, seed: int = 0,
                    t: float = 0.0, chart_choice: str = "partition") -> list[np.ndarray]:
    """Pointwise |nabla^i field|_g for i = 0..order at sampled manifold points.

    The sample points depend only on ``seed``; ``chart_choice`` selects which
    chart represents each point ("partition" or a random containing chart).
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    rng = np.random.default_rng(seed)
    chart, x = _sample_chart_points(model, n_samples, rng, chart_choice)
    g, g_inv, _, gamma, _ = connection_batch(model, chart, x)
    is_tensor = isinstance(field, TensorField11)

    def first(y):
        ga = connection_batch(model, chart, y)[3]
        if is_tensor:
            a, da = field.evaluate(model, t, chart, y)
            return covariant_derivative_11_batch(a, da, ga)
        b, db = field.evaluate(model, t, chart, y)
        return covariant_derivative_vector_batch(b, db, ga)

    val, _ = field.evaluate(model, t, chart, x)
    norms = [tensor_norm(val, 1, g, g_inv)]
    if order >= 1:
        norms.append(tensor_norm(first(x), 1, g, g_inv))
    if order >= 2:
        norms.append(tensor_norm(_second_covariant(first, x, gamma), 1, g, g_inv))
    return norms


def tensor_sup_norm(field, model: ManifoldModel, order: int = 0, n_samples: int = 200, seed: int = 0,
                    t: float = 0.0, chart_choice: str = "partition") -> float:
    """Sampled max over i <= order of sup |nabla^i field|_g."""
    norms = covariant_norms(field, model, order, n_samples, seed, t, chart_choice)
    return float(max(np.max(n) for n in norms))
