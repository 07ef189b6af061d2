"""Gallery of model manifolds of bounded geometry with normalized atlases.

Every chart maps onto the open unit ball of R^d. All four models are
conformally flat in their charts (g = w(x) I), which gives closed-form
first and second derivatives of the metric. Points also have a global
("ambient") representation used for distances, chart lookup and sampling:

    euclidean   R^d
    sphere      unit vectors of R^(d+1)
    hyperbolic  upper sheet of the hyperboloid <X, X>_L = -1 in R^(d+1)
    torus       representatives in [0, 1)^d

All batched methods take ``chart`` of shape (n,) and ``x`` of shape (n, d).
"""

from __future__ import annotations

import itertools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from ..errors import LeftAtlas, NotInOverlap, PointOutsideChart

EUCLIDEAN = "euclidean"
SPHERE = "sphere"
HYPERBOLIC = "hyperbolic"
TORUS = "torus"
KINDS = (EUCLIDEAN, SPHERE, HYPERBOLIC, TORUS)


@dataclass(frozen=True)
class ChartPoint:
    chart: int
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))


def _batch(chart, x, d):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != d:
        raise ValueError(f"expected coordinates of length {d}, got shape {x.shape}")
    chart = np.broadcast_to(np.asarray(chart, dtype=np.int64), x.shape[:1]).copy()
    return chart, x, single


def _zigzag(v):
    v = np.asarray(v, dtype=np.int64)
    return np.where(v >= 0, 2 * v, -2 * v - 1)


def _unzigzag(z):
    z = np.asarray(z, dtype=np.int64)
    return (z >> 1) ^ -(z & 1)


class _LatticeIds:
    """Bijection between integer vectors of Z^m and nonnegative chart ids."""

    def __init__(self, m: int):
        self.m = m
        self.bits = 62 // m
        self.limit = 1 << self.bits

    def encode(self, v) -> np.ndarray:
        v = np.atleast_2d(np.asarray(v, dtype=np.int64))
        z = _zigzag(v)
        if np.any(z >= self.limit):
            raise LeftAtlas("lattice index outside the encodable chart range")
        ids = np.zeros(v.shape[0], dtype=np.int64)
        for j in range(self.m):
            ids |= z[:, j] << (self.bits * j)
        return ids

    def decode(self, ids) -> np.ndarray:
        ids = np.atleast_1d(np.asarray(ids, dtype=np.int64))
        if np.any(ids < 0):
            raise ValueError("chart ids are nonnegative")
        mask = self.limit - 1
        out = np.empty((ids.shape[0], self.m), dtype=np.int64)
        for j in range(self.m):
            out[:, j] = _unzigzag((ids >> (self.bits * j)) & mask)
        return out


class ManifoldModel(ABC):
    """Riemannian manifold with a normalized, uniformly regular atlas.

    Attributes
    ----------
    d : intrinsic dimension
    r : shrink radius; the balls r*B in every chart cover the manifold
    K : metric equivalence constant, |v|^2/K <= g(v, v) <= K |v|^2
    multiplicity : declared bound N on the number of charts sharing a point
    """

    kind: str
    ambient_dim: int
    injectivity_radius: float
    sectional_constant: float

    def __init__(self, d: int, r: float = 0.9, K: float | None = None):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        if not 0.0 < r < 1.0:
            raise ValueError("shrink radius r must lie in (0, 1)")
        self.d = int(d)
        self.r = float(r)
        self.K = float(K) if K is not None else self.natural_K()
        if self.K < 1.0:
            raise ValueError("equivalence constant K must be >= 1")

    def __repr__(self):
        return f"{type(self).__name__}(d={self.d}, r={self.r}, K={self.K:.4g})"

    # -- metric -----------------------------------------------------------
    @abstractmethod
    def conformal(self, chart, x):
        """Conformal factor w with gradient and Hessian, shapes (n,), (n,d), (n,d,d)."""

    @abstractmethod
    def natural_K(self) -> float:
        """Smallest K satisfying the equivalence bound on the unit ball."""

    def metric_derivs(self, chart, x):
        """Return g, dg, d2g with dg[n,k,i,j] = d_k g_ij, d2g[n,a,b,i,j] = d_a d_b g_ij."""
        w, dw, d2w = self.conformal(chart, x)
        eye = np.eye(self.d)
        g = w[:, None, None] * eye
        dg = dw[:, :, None, None] * eye
        d2g = d2w[:, :, :, None, None] * eye
        return g, dg, d2g

    # -- charts -----------------------------------------------------------
    @abstractmethod
    def embed(self, chart, x) -> np.ndarray:
        """Chart coordinates -> ambient points."""

    @abstractmethod
    def embed_jacobian(self, chart, x) -> np.ndarray:
        """d(ambient)/d(chart), shape (n, D, d)."""

    @abstractmethod
    def coords(self, chart, P) -> np.ndarray:
        """Ambient points -> coordinates in the given chart (no domain check)."""

    @abstractmethod
    def coords_jacobian(self, chart, P) -> np.ndarray:
        """Derivative of the ambient extension of ``coords``, shape (n, d, D)."""

    @abstractmethod
    def partition_chart(self, P) -> np.ndarray:
        """Chart of the partition piece containing P (first match among shrunk balls)."""

    def central_chart(self, P) -> np.ndarray:
        """Chart in which P has the smallest coordinate norm among candidates."""
        return self.partition_chart(P)

    @abstractmethod
    def charts_near(self, P) -> list[int]:
        """Superset of the charts whose (full) ball may contain a single point P."""

    def chart_ids(self) -> list[int] | None:
        """All chart ids for finite atlases, None for countable ones."""
        return None

    def validate_chart(self, chart) -> None:
        ids = self.chart_ids()
        c = np.atleast_1d(np.asarray(chart))
        if ids is not None and np.any((c < 0) | (c >= len(ids))):
            raise ValueError(f"chart id out of range for {self!r}")
        if ids is None and np.any(c < 0):
            raise ValueError("chart ids are nonnegative")

    def transition_batch(self, frm, to, x):
        """x_bar = (phi_to o psi_from)(x) and its Jacobian, no overlap check."""
        frm, x, _ = _batch(frm, x, self.d)
        to = np.broadcast_to(np.asarray(to, dtype=np.int64), frm.shape)
        P = self.embed(frm, x)
        xbar = self.coords(to, P)
        J = np.einsum("nia,nak->nik", self.coords_jacobian(to, P), self.embed_jacobian(frm, x))
        same = frm == to
        if np.any(same):
            xbar[same] = x[same]
            J[same] = np.eye(self.d)
        return xbar, J

    def chart_norms(self, P):
        """Candidate charts for a single ambient point P and the coordinate norm of P in each."""
        P = np.asarray(P, dtype=float).reshape(1, -1)
        ids = np.asarray(self.charts_near(P[0]), dtype=np.int64)
        with np.errstate(invalid="ignore", divide="ignore"):
            x = self.coords(ids, np.repeat(P, len(ids), axis=0))
            norms = np.linalg.norm(x, axis=-1)
        norms[~np.isfinite(norms)] = np.inf
        return ids, norms

    def charts_containing(self, P, radius: float = 1.0) -> list[int]:
        """Charts whose ball of the given radius contains the single ambient point P."""
        ids, norms = self.chart_norms(P)
        return [int(c) for c in ids[norms < radius]]

    # -- global geometry --------------------------------------------------
    ambient_signature: np.ndarray | None = None

    def ambient_inner(self, u, v):
        """Inner product of the ambient space the model is isometrically embedded in."""
        if self.ambient_signature is None:
            return np.sum(u * v, axis=-1)
        return np.sum(u * v * self.ambient_signature, axis=-1)

    @abstractmethod
    def distance(self, P, Q) -> np.ndarray:
        """Closed-form geodesic distance between ambient points."""

    @abstractmethod
    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Sample ambient points spread over the manifold (or a large region of it)."""

    @abstractmethod
    def point_at_distance(self, P, radius: float, rng: np.random.Generator) -> np.ndarray:
        """Endpoint of a unit-speed geodesic of the given length from P, random direction."""

    @property
    def curvature_bounds(self) -> tuple[float, float]:
        """(K1, K2): sectional <= K1^2 and Ricci >= -(d-1) K2^2."""
        k = self.sectional_constant
        return (math.sqrt(max(k, 0.0)), math.sqrt(max(-k, 0.0)))

    @property
    def ambient_origin(self) -> np.ndarray:
        return self.embed(np.array([0]), np.zeros((1, self.d)))[0]


class Euclidean(ManifoldModel):
    """R^d covered by translated unit-ball charts centred on a cubic lattice."""

    kind = EUCLIDEAN
    injectivity_radius = math.inf
    sectional_constant = 0.0
    sample_half_width = 5.0

    def __init__(self, d: int = 2, r: float = 0.9, K: float | None = None):
        super().__init__(d, r, K)
        self.ambient_dim = self.d
        self.spacing = min(1.0, 1.9 * self.r / math.sqrt(self.d))
        self._ids = _LatticeIds(self.d)
        reach = math.ceil(1.0 / self.spacing)
        self.multiplicity = (2 * reach + 1) ** self.d

    def natural_K(self):
        return 1.0

    def conformal(self, chart, x):
        n = x.shape[0]
        return np.ones(n), np.zeros((n, self.d)), np.zeros((n, self.d, self.d))

    def centers(self, chart):
        return self.spacing * self._ids.decode(chart).astype(float)

    def embed(self, chart, x):
        return self.centers(chart) + x

    def embed_jacobian(self, chart, x):
        return np.broadcast_to(np.eye(self.d), (x.shape[0], self.d, self.d)).copy()

    def coords(self, chart, P):
        return P - self.centers(chart)

    def coords_jacobian(self, chart, P):
        return np.broadcast_to(np.eye(self.d), (P.shape[0], self.d, self.d)).copy()

    def partition_chart(self, P):
        P = np.atleast_2d(P)
        return self._ids.encode(np.rint(P / self.spacing).astype(np.int64))

    def charts_near(self, P):
        lo = np.floor((P - 1.0) / self.spacing).astype(int)
        hi = np.ceil((P + 1.0) / self.spacing).astype(int)
        grid = itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi)))
        return [int(c) for c in self._ids.encode(np.array(list(grid)))]

    def distance(self, P, Q):
        return np.linalg.norm(np.asarray(P) - np.asarray(Q), axis=-1)

    def sample(self, n, rng):
        w = self.sample_half_width
        return rng.uniform(-w, w, size=(n, self.d))

    def point_at_distance(self, P, radius, rng):
        v = rng.standard_normal(self.d)
        return np.asarray(P) + radius * v / np.linalg.norm(v)


class Sphere(ManifoldModel):
    """Unit sphere S^d with two rescaled stereographic charts.

    Chart 0 projects from the north pole (centre: south pole), chart 1 from
    the south pole. Chart coordinates are x = y / scale where y is the usual
    stereographic coordinate, so the equator sits at |x| = 1/scale.
    """

    kind = SPHERE
    injectivity_radius = math.pi
    sectional_constant = 1.0
    multiplicity = 2

    def __init__(self, d: int = 2, r: float = 0.9, K: float | None = None,
                 scale: float = math.sqrt(3.0)):
        self.scale = float(scale)
        super().__init__(d, r, K)
        self.ambient_dim = self.d + 1

    def natural_K(self):
        s2 = self.scale ** 2
        return max(4.0 * s2, (1.0 + s2) ** 2 / (4.0 * s2))

    def chart_ids(self):
        return [0, 1]

    def _sign(self, chart):
        return np.where(np.asarray(chart) == 0, 1.0, -1.0)

    def conformal(self, chart, x):
        s2 = self.scale ** 2
        u = 1.0 + s2 * np.sum(x * x, axis=-1)
        w = 4.0 * s2 / u ** 2
        dw = (-16.0 * s2 * s2 / u ** 3)[:, None] * x
        d2w = (-16.0 * s2 * s2 / u ** 3)[:, None, None] * np.eye(self.d) \
            + (96.0 * s2 ** 3 / u ** 4)[:, None, None] * np.einsum("na,nb->nab", x, x)
        return w, dw, d2w

    def embed(self, chart, x):
        sgn = self._sign(chart)
        y = self.scale * x
        q = np.sum(y * y, axis=-1)
        P = np.empty((x.shape[0], self.d + 1))
        P[:, :-1] = 2.0 * y / (q + 1.0)[:, None]
        P[:, -1] = sgn * (q - 1.0) / (q + 1.0)
        return P

    def embed_jacobian(self, chart, x):
        sgn = self._sign(chart)
        y = self.scale * x
        q = np.sum(y * y, axis=-1)
        den = (q + 1.0)
        Jy = np.empty((x.shape[0], self.d + 1, self.d))
        Jy[:, :-1, :] = (2.0 / den)[:, None, None] * np.eye(self.d) \
            - (4.0 / den ** 2)[:, None, None] * np.einsum("ni,nj->nij", y, y)
        Jy[:, -1, :] = (sgn * 4.0 / den ** 2)[:, None] * y
        return self.scale * Jy

    def coords(self, chart, P):
        sgn = self._sign(chart)
        with np.errstate(divide="ignore", invalid="ignore"):
            y = P[:, :-1] / (1.0 - sgn * P[:, -1])[:, None]
        return y / self.scale

    def coords_jacobian(self, chart, P):
        sgn = self._sign(chart)
        den = 1.0 - sgn * P[:, -1]
        J = np.zeros((P.shape[0], self.d, self.d + 1))
        J[:, :, :-1] = (1.0 / den)[:, None, None] * np.eye(self.d)
        J[:, :, -1] = (sgn / den ** 2)[:, None] * P[:, :-1]
        return J / self.scale

    def partition_chart(self, P):
        P = np.atleast_2d(P)
        x0 = self.coords(np.zeros(len(P), dtype=np.int64), P)
        in0 = np.linalg.norm(x0, axis=-1) < self.r
        return np.where(in0, 0, 1).astype(np.int64)

    def central_chart(self, P):
        P = np.atleast_2d(P)
        return np.where(P[:, -1] <= 0.0, 0, 1).astype(np.int64)

    def charts_near(self, P):
        return [0, 1]

    def distance(self, P, Q):
        P = np.asarray(P)
        Q = np.asarray(Q)
        chord_m = np.linalg.norm(P - Q, axis=-1)
        chord_p = np.linalg.norm(P + Q, axis=-1)
        near = 2.0 * np.arcsin(np.minimum(1.0, chord_m / 2.0))
        far = np.pi - 2.0 * np.arcsin(np.minimum(1.0, chord_p / 2.0))
        return np.where(chord_m <= chord_p, near, far)

    def sample(self, n, rng):
        v = rng.standard_normal((n, self.d + 1))
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    def point_at_distance(self, P, radius, rng):
        P = np.asarray(P, dtype=float)
        v = rng.standard_normal(self.d + 1)
        v -= (v @ P) * P
        v /= np.linalg.norm(v)
        return np.cos(radius) * P + np.sin(radius) * v


def _lorentz_halfspace(scale, shift):
    """Lorentz matrices of the half-space isometries (u, h) -> (s u + c, s h).

    Hyperboloid coordinates relate to half-space ones through
    X0 + Xd = 1/h, X_i = u_i / h, X0 - Xd = (h^2 + |u|^2) / h.
    """
    scale = np.atleast_1d(np.asarray(scale, dtype=float))
    shift = np.atleast_2d(np.asarray(shift, dtype=float))
    n, m = shift.shape
    D = m + 2
    basis = np.eye(D)
    out = np.empty((n, D, D))
    for col in range(D):
        X = basis[col]
        a = X[0] + X[-1]
        b = X[0] - X[-1]
        mid = X[1:-1]
        a2 = a / scale
        mid2 = mid[None, :] + (shift / scale[:, None]) * a
        b2 = scale * b + 2.0 * shift @ mid + np.sum(shift * shift, axis=-1) / scale * a
        out[:, 0, col] = 0.5 * (a2 + b2)
        out[:, 1:-1, col] = mid2
        out[:, -1, col] = 0.5 * (a2 - b2)
    return out


class Hyperbolic(ManifoldModel):
    """Hyperbolic space H^d with Poincare sub-ball charts moved by isometries.

    Chart (k, n) is the Poincare ball of Euclidean radius ``rho`` around the
    image of the hyperboloid origin under the half-space isometry
    (u, h) -> (e^(k*step) (u + spacing*n), e^(k*step) h). Chart 0 is
    the untranslated ball. Ids enumerate (k, n) in Z^d.
    """

    kind = HYPERBOLIC
    injectivity_radius = math.inf
    sectional_constant = -1.0
    sample_radius = 4.0

    def __init__(self, d: int = 2, r: float = 0.9, K: float | None = None,
                 rho: float = 0.5, level_step: float = 0.5, spacing: float = 0.5):
        self.rho = float(rho)
        super().__init__(d, r, K)
        self.ambient_dim = self.d + 1
        self.level_step = float(level_step)
        self.spacing = float(spacing)
        self.ambient_signature = np.r_[-1.0, np.ones(self.d)]
        self._ids = _LatticeIds(self.d)
        self.chart_radius = 2.0 * math.atanh(self.rho)
        self.multiplicity = self._multiplicity_bound()

    def _multiplicity_bound(self):
        # charts meeting a point: levels within chart_radius in log-height,
        # and per level the shifts within h*sinh(chart_radius)
        R = self.chart_radius
        levels = 2 * math.ceil(R / self.level_step) + 1
        per = 0
        for j in range(-math.ceil(R / self.level_step) - 1, math.ceil(R / self.level_step) + 2):
            width = 2.0 * math.sinh(R) * math.exp(self.level_step * (abs(j) + 0.5)) / self.spacing
            per = max(per, math.ceil(width) + 1)
        return levels * per ** (self.d - 1)

    def natural_K(self):
        p2 = self.rho ** 2
        return max(4.0 * p2 / (1.0 - p2) ** 2, 1.0 / (4.0 * p2))

    def conformal(self, chart, x):
        p2 = self.rho ** 2
        u = 1.0 - p2 * np.sum(x * x, axis=-1)
        w = 4.0 * p2 / u ** 2
        dw = (16.0 * p2 * p2 / u ** 3)[:, None] * x
        d2w = (16.0 * p2 * p2 / u ** 3)[:, None, None] * np.eye(self.d) \
            + (96.0 * p2 ** 3 / u ** 4)[:, None, None] * np.einsum("na,nb->nab", x, x)
        return w, dw, d2w

    def lattice(self, chart):
        return self._ids.decode(chart)

    def lorentz(self, chart):
        v = self.lattice(chart).astype(float)
        s = np.exp(self.level_step * v[:, 0])
        c = self.spacing * s[:, None] * v[:, 1:]
        return _lorentz_halfspace(s, c)

    def _lorentz_inv(self, L):
        eta = self.ambient_signature
        return eta[None, :, None] * np.swapaxes(L, 1, 2) * eta[None, None, :]

    def embed(self, chart, x):
        y = self.rho * x
        q = np.sum(y * y, axis=-1)
        X = np.empty((x.shape[0], self.d + 1))
        X[:, 0] = (1.0 + q) / (1.0 - q)
        X[:, 1:] = 2.0 * y / (1.0 - q)[:, None]
        return np.einsum("nab,nb->na", self.lorentz(chart), X)

    def embed_jacobian(self, chart, x):
        y = self.rho * x
        q = np.sum(y * y, axis=-1)
        den = 1.0 - q
        DX = np.empty((x.shape[0], self.d + 1, self.d))
        DX[:, 0, :] = (4.0 / den ** 2)[:, None] * y
        DX[:, 1:, :] = (2.0 / den)[:, None, None] * np.eye(self.d) \
            + (4.0 / den ** 2)[:, None, None] * np.einsum("ni,nj->nij", y, y)
        return self.rho * np.einsum("nab,nbk->nak", self.lorentz(chart), DX)

    def coords(self, chart, P):
        X = np.einsum("nab,nb->na", self._lorentz_inv(self.lorentz(chart)), P)
        return X[:, 1:] / (1.0 + X[:, 0])[:, None] / self.rho

    def coords_jacobian(self, chart, P):
        Linv = self._lorentz_inv(self.lorentz(chart))
        X = np.einsum("nab,nb->na", Linv, P)
        den = 1.0 + X[:, 0]
        D = np.zeros((P.shape[0], self.d, self.d + 1))
        D[:, :, 0] = -X[:, 1:] / den[:, None] ** 2
        D[:, :, 1:] = (1.0 / den)[:, None, None] * np.eye(self.d)
        return np.einsum("nib,nba->nia", D, Linv) / self.rho

    def _halfspace(self, P):
        P = np.atleast_2d(P)
        a = P[:, 0] + P[:, -1]
        h = 1.0 / a
        u = P[:, 1:-1] * h[:, None]
        return u, h

    def partition_chart(self, P):
        u, h = self._halfspace(P)
        k = np.rint(np.log(h) / self.level_step).astype(np.int64)
        s = np.exp(self.level_step * k)
        nvec = np.rint(u / (self.spacing * s[:, None])).astype(np.int64)
        return self._ids.encode(np.column_stack([k, nvec]))

    def charts_near(self, P):
        u, h = self._halfspace(P)
        u, h = u[0], h[0]
        R = self.chart_radius
        kc = math.log(h) / self.level_step
        span = R / self.level_step + 1
        out = []
        for k in range(math.floor(kc - span), math.ceil(kc + span) + 1):
            s = math.exp(self.level_step * k)
            reach = h * math.sinh(R) / (self.spacing * s) + 1
            ranges = [range(math.floor(ui / (self.spacing * s) - reach),
                            math.ceil(ui / (self.spacing * s) + reach) + 1) for ui in u]
            for nvec in itertools.product(*ranges):
                out.append((k, *nvec))
        return [int(c) for c in self._ids.encode(np.array(out, dtype=np.int64))]

    def distance(self, P, Q):
        diff = np.asarray(P) - np.asarray(Q)
        m = np.maximum(self.ambient_inner(diff, diff), 0.0)
        return 2.0 * np.arcsinh(np.sqrt(m) / 2.0)

    def sample(self, n, rng):
        o = self.ambient_origin
        radii = rng.uniform(0.0, self.sample_radius, size=n)
        return np.array([self._geodesic(o, rr, rng) for rr in radii]).reshape(n, -1)

    def _geodesic(self, P, radius, rng):
        P = np.asarray(P, dtype=float)
        w = rng.standard_normal(self.d + 1)
        v = w + self.ambient_inner(w, P) * P
        v /= math.sqrt(self.ambient_inner(v, v))
        return np.cosh(radius) * P + np.sinh(radius) * v

    def point_at_distance(self, P, radius, rng):
        return self._geodesic(P, radius, rng)


class FlatTorus(ManifoldModel):
    """Flat torus R^d / Z^d with 2^d charts x -> c + scale*x (mod 1), c in {0, 1/2}^d."""

    kind = TORUS
    injectivity_radius = 0.5
    sectional_constant = 0.0

    def __init__(self, d: int = 2, r: float = 0.9, K: float | None = None, scale: float = 0.49):
        self.scale = float(scale)
        super().__init__(d, r, K)
        if self.scale >= 0.5:
            raise ValueError("torus chart scale must be < 1/2 for injectivity")
        self.ambient_dim = self.d
        self._centers = 0.5 * np.array(list(itertools.product((0, 1), repeat=self.d)), dtype=float)
        self.multiplicity = 2 ** self.d

    def natural_K(self):
        return max(self.scale ** 2, 1.0 / self.scale ** 2)

    def chart_ids(self):
        return list(range(2 ** self.d))

    def conformal(self, chart, x):
        n = x.shape[0]
        return np.full(n, self.scale ** 2), np.zeros((n, self.d)), np.zeros((n, self.d, self.d))

    @staticmethod
    def wrap(v):
        """Representative of v modulo Z^d in [-1/2, 1/2)."""
        return v - np.floor(v + 0.5)

    def embed(self, chart, x):
        P = self._centers[chart] + self.scale * x
        return P - np.floor(P)

    def embed_jacobian(self, chart, x):
        return np.broadcast_to(self.scale * np.eye(self.d), (x.shape[0], self.d, self.d)).copy()

    def coords(self, chart, P):
        return self.wrap(P - self._centers[chart]) / self.scale

    def coords_jacobian(self, chart, P):
        return np.broadcast_to(np.eye(self.d) / self.scale, (P.shape[0], self.d, self.d)).copy()

    def _all_norms(self, P):
        P = np.atleast_2d(P)
        diffs = self.wrap(P[:, None, :] - self._centers[None, :, :]) / self.scale
        return np.linalg.norm(diffs, axis=-1)

    def partition_chart(self, P):
        inside = self._all_norms(P) < self.r
        first = np.argmax(inside, axis=1)
        if not np.all(inside[np.arange(len(first)), first]):
            raise LeftAtlas("point not covered by any shrunk torus chart")
        return first.astype(np.int64)

    def central_chart(self, P):
        return np.argmin(self._all_norms(P), axis=1).astype(np.int64)

    def charts_near(self, P):
        return self.chart_ids()

    def distance(self, P, Q):
        return np.linalg.norm(self.wrap(np.asarray(P) - np.asarray(Q)), axis=-1)

    def sample(self, n, rng):
        return rng.uniform(0.0, 1.0, size=(n, self.d))

    def point_at_distance(self, P, radius, rng):
        v = rng.standard_normal(self.d)
        Q = np.asarray(P) + radius * v / np.linalg.norm(v)
        return Q - np.floor(Q)


def make_model(kind: str, d: int = 2, r: float = 0.9, K: float | None = None, **params) -> ManifoldModel:
    """Build a gallery model by name."""
    classes = {EUCLIDEAN: Euclidean, SPHERE: Sphere, HYPERBOLIC: Hyperbolic, TORUS: FlatTorus}
    try:
        cls = classes[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}") from None
    return cls(d=d, r=r, K=K, **params)


# -- single-point public operations ------------------------------------------


def check_in_chart(x, where: str = "") -> None:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.linalg.norm(x) >= 1.0:
        raise PointOutsideChart(f"|x| = {np.linalg.norm(x):.6g} >= 1 {where}".strip())


def transition(model: ManifoldModel, frm: int, to: int, x):
    """Transition map phi_to o psi_from at x with its Jacobian.

    Raises NotInOverlap if the image is outside the target chart ball.
    """
    x = np.asarray(x, dtype=float)
    check_in_chart(x, "in source chart")
    model.validate_chart([frm, to])
    xbar, J = model.transition_batch(np.array([frm]), np.array([to]), x[None, :])
    xbar, J = xbar[0], J[0]
    if not np.all(np.isfinite(xbar)) or np.linalg.norm(xbar) >= 1.0:
        raise NotInOverlap(f"image of x under chart {frm}->{to} has |x_bar| >= 1")
    return xbar, J


def exact_distance(model: ManifoldModel, p: ChartPoint, q: ChartPoint) -> float:
    P = model.embed(np.array([p.chart]), p.x[None, :])
    Q = model.embed(np.array([q.chart]), q.x[None, :])
    return float(model.distance(P, Q)[0])
