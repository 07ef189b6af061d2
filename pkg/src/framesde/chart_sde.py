"""In-chart frame-bundle SDE: horizontal lift, localized coefficients and Ito drift.

The state in a chart is (xi, zeta) with xi in the unit ball and zeta a d x d
matrix whose columns are the frame vectors. Flattened states are laid out as
y = (xi, zeta.ravel()) with zeta in row-major order, so the zeta block entry
(k, m) sits at index d + k*d + m.

Stratonovich system driven by W in R^d, with lam the bump function:

    dxi^i      = lam a^i_l zeta^l_m o dW^m + lam b^i dt
    dzeta^k_n  = -lam Gamma^k_ij zeta^i_n a^j_l zeta^l_m o dW^m - lam Gamma^k_ij b^i zeta^j_n dt
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PointOutsideChart
from .geometry.curvature import connection_batch
from .geometry.models import ChartPoint, ManifoldModel, check_in_chart


@dataclass(frozen=True)
class FrameState:
    chart: int
    xi: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float).reshape(-1)
        zeta = np.asarray(self.zeta, dtype=float).reshape(xi.size, xi.size)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "zeta", zeta)
        object.__setattr__(self, "chart", int(self.chart))

    @property
    def d(self) -> int:
        return self.xi.size

    def flat(self) -> np.ndarray:
        return pack(self.xi[None], self.zeta[None])[0]


@dataclass(frozen=True)
class BumpParams:
    r: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ValueError("r must lie in (0, 1)")

    @property
    def inner(self) -> float:
        return (1.0 + 2.0 * self.r) / 3.0

    @property
    def outer(self) -> float:
        return (2.0 + self.r) / 3.0


@dataclass(frozen=True)
class ChartSdeCoeffs:
    """strat_diffusion[q, m] multiplies dW^m for flat state component q."""

    strat_diffusion: np.ndarray
    strat_drift: np.ndarray
    ito_drift: np.ndarray


def pack(xi, zeta):
    n, d = xi.shape
    return np.concatenate([xi, zeta.reshape(n, d * d)], axis=1)


def unpack(y, d):
    return y[:, :d], y[:, d:].reshape(-1, d, d)


# -- bump ----------------------------------------------------------------------


def bump_batch(x, params: BumpParams):
    """lam(x) and its gradient for rows of x."""
    x = np.atleast_2d(x)
    nrm = np.linalg.norm(x, axis=-1)
    s = np.clip((3.0 * nrm - 2.0 * params.r - 1.0) / (1.0 - params.r), 0.0, 1.0)
    lam = -6.0 * s**5 + 15.0 * s**4 - 10.0 * s**3 + 1.0
    dp = -30.0 * s**2 * (s - 1.0) ** 2
    safe = np.where(nrm > 0.0, nrm, 1.0)
    grad = (dp * 3.0 / (1.0 - params.r) / safe)[:, None] * x
    return lam, grad


def bump(x, params: BumpParams) -> float:
    lam, _ = bump_batch(np.asarray(x, dtype=float)[None], params)
    return float(lam[0])


# -- coefficients --------------------------------------------------------------


def horizontal_lift_vector(b, gamma, zeta) -> np.ndarray:
    """Horizontal lift of b at frame zeta: (b^i ; -Gamma^k_ij b^i zeta^j_m)."""
    b = np.asarray(b, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    z = -np.einsum("kij,i,jm->km", gamma, b, zeta)
    return np.concatenate([b, z.ravel()])


class ChartSDE:
    """Batched coefficient provider for the localized chart system.

    Rows with |xi| >= outer have lam = 0 and all coefficients vanish; their
    geometry is not evaluated, so such rows may even lie outside the ball.
    """

    def __init__(self, model: ManifoldModel, A, B, params: BumpParams | None = None):
        self.model = model
        self.A = A
        self.B = B
        self.params = params or BumpParams(model.r)
        self.d = model.d

    def _eval(self, t, chart, xi, derivatives=True):
        n, d = xi.shape
        lam, dlam = bump_batch(xi, self.params)
        live = lam > 0.0
        if np.all(live):
            _, _, _, gamma, dgamma = connection_batch(self.model, chart, xi, derivatives)
            a, da = self.A.evaluate(self.model, t, chart, xi)
            b, _ = self.B.evaluate(self.model, t, chart, xi)
            return lam, dlam, a, da, b, gamma, dgamma
        gamma = np.zeros((n, d, d, d))
        dgamma = np.zeros((n, d, d, d, d)) if derivatives else None
        a = np.zeros((n, d, d))
        da = np.zeros((n, d, d, d))
        b = np.zeros((n, d))
        if np.any(live):
            c, x = chart[live], xi[live]
            _, _, _, gl, dgl = connection_batch(self.model, c, x, derivatives)
            gamma[live] = gl
            if derivatives:
                dgamma[live] = dgl
            a[live], da[live] = self.A.evaluate(self.model, t, c, x)
            b[live], _ = self.B.evaluate(self.model, t, c, x)
        return lam, dlam, a, da, b, gamma, dgamma

    def coefficients(self, t, chart, xi, zeta, ito: bool = True):
        """Return (G, f, f_ito): G[n, q, m], f[n, q], f_ito[n, q] (None unless ito)."""
        n, d = xi.shape
        lam, dlam, a, da, b, gamma, dgamma = self._eval(t, chart, xi, derivatives=ito)
        A_ = lam[:, None, None] * a
        V = A_ @ zeta  # xi diffusion, column q per noise
        Z = _gamma_contract(gamma, zeta, V)  # Z[n, k, m, q]: zeta[k, m] diffusion along noise q
        G = np.concatenate([V, Z.reshape(n, d * d, d)], axis=1)
        lb = lam[:, None] * b
        gb = (lb[:, None, None, :] @ gamma)[:, :, 0, :]  # Gamma^k_ij lb^i, indexed [n, k, j]
        f = np.concatenate([lb, -(gb @ zeta).reshape(n, d * d)], axis=1)
        if not ito:
            return G, f, None
        return G, f, f + self._ito_correction(lam, dlam, a, da, gamma, dgamma, zeta, A_, V, Z)

    @staticmethod
    def _ito_correction(lam, dlam, a, da, gamma, dgamma, zeta, A_, V, Z):
        """1/2 sum_q of the derivative of diffusion column q along itself.

        With dA_ = d(lam a) = dlam a + lam da, the xi block is
            1/2 (d_j A_^i_l V^j_q zeta^l_q + A_^i_l Z^l_qq)
        and the zeta block (entry k, m) expands into the four terms
            -1/2 (d_p Gamma^k_ij V^p_q zeta^i_m V^j_q + Gamma^k_ij Z^i_mq V^j_q
                  + Gamma^k_ij zeta^i_m (d_p A_^j_l V^p_q zeta^l_q + A_^j_l Z^l_qq)).
        """
        n, d = V.shape[:2]
        dA = dlam[:, :, None, None] * a[:, None] + lam[:, None, None, None] * da
        Zqq = np.einsum("nlqq->nlq", Z)
        dV = np.einsum("npjl,npq,nlq->njq", dA, V, zeta) + np.einsum("njl,nlq->njq", A_, Zqq)
        c_xi = 0.5 * np.einsum("niq->ni", dV)
        c_zeta = -0.5 * (np.einsum("npkij,npq,nim,njq->nkm", dgamma, V, zeta, V)
                         + np.einsum("nkij,nimq,njq->nkm", gamma, Z, V)
                         + np.einsum("nkij,nim,njq->nkm", gamma, zeta, dV))
        return np.concatenate([c_xi, c_zeta.reshape(n, d * d)], axis=1)


def _gamma_contract(gamma, X, Y):
    """-Gamma^k_ij X^i_m Y^j_q, indexed [n, k, m, q]."""
    M = np.swapaxes(gamma, 2, 3) @ X[:, None]  # [n, k, j, m]
    return -(np.swapaxes(M, 2, 3) @ Y[:, None])


def _single(state: FrameState):
    check_in_chart(state.xi)
    return np.array([state.chart]), state.xi[None], state.zeta[None]


def strat_coefficients(A, B, model: ManifoldModel, t, state: FrameState,
                       params: BumpParams | None = None) -> ChartSdeCoeffs:
    c, x, z = _single(state)
    G, f, fi = ChartSDE(model, A, B, params).coefficients(t, c, x, z, ito=True)
    return ChartSdeCoeffs(strat_diffusion=G[0], strat_drift=f[0], ito_drift=fi[0])


def ito_drift(A, B, model: ManifoldModel, t, state: FrameState, params: BumpParams | None = None) -> np.ndarray:
    return strat_coefficients(A, B, model, t, state, params).ito_drift


def frame_gram_batch(model: ManifoldModel, chart, xi, zeta):
    g = model.metric_derivs(chart, xi)[0]
    return np.einsum("nik,nij,njm->nkm", zeta, g, zeta)


def frame_gram(state: FrameState, model: ManifoldModel) -> np.ndarray:
    c, x, z = _single(state)
    return frame_gram_batch(model, c, x, z)[0]


def orthonormal_frame_batch(model: ManifoldModel, chart, xi):
    """Gram-Schmidt of the coordinate basis under g, via zeta = L^-T with g = L L^T."""
    g = model.metric_derivs(chart, xi)[0]
    L = np.linalg.cholesky(g)
    return np.swapaxes(np.linalg.inv(L), 1, 2)


def orthonormal_frame_at(model: ManifoldModel, p: ChartPoint) -> FrameState:
    if np.linalg.norm(p.x) >= 1.0:
        raise PointOutsideChart(f"|x| = {np.linalg.norm(p.x):.6g} >= 1")
    zeta = orthonormal_frame_batch(model, np.array([p.chart]), p.x[None])[0]
    return FrameState(chart=p.chart, xi=p.x.copy(), zeta=zeta)


def fd_ito_correction(sde: ChartSDE, t, chart, xi, zeta, step: float = 1e-6):
    """Oracle: 1/2 sum_q (D G_q)[G_q] by central differences in the flat state.

    Differences at steps h and 2h are Richardson-combined to cancel the
    O(h^2) truncation term, which matters where the bump is steep.
    """
    d = sde.d
    y = pack(xi, zeta)
    G, _, _ = sde.coefficients(t, chart, xi, zeta, ito=False)

    def directional(q, h):
        Gp = sde.coefficients(t, chart, *unpack(y + h * G[:, :, q], d), ito=False)[0][:, :, q]
        Gm = sde.coefficients(t, chart, *unpack(y - h * G[:, :, q], d), ito=False)[0][:, :, q]
        return (Gp - Gm) / (2.0 * h)

    out = np.zeros_like(y)
    for q in range(d):
        out += (4.0 * directional(q, step) - directional(q, 2.0 * step)) / 3.0
    return 0.5 * out
