"""Deterministic and Monte-Carlo checks of the frame SDE and its estimates.

Every check returns a VerificationReport whose pass flags are functions of
the recorded numbers. Monte-Carlo entries carry standard errors and pass
when |measured - target| <= tol + 3 se.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chart_sde import (BumpParams, ChartSDE, FrameState, fd_ito_correction, frame_gram_batch,
                        orthonormal_frame_at, orthonormal_frame_batch)
from .fields import (AmbientRotation, IdentityTensor, ZeroTensor, ZeroVector, generator_data_batch)
from .geometry.curvature import connection_batch
from .geometry.models import ChartPoint, ManifoldModel, Sphere
from .integrator import (EventSwitch, NoiseSource, NoSwitch, StepScheme, TrajectoryRecord, ensemble,
                         integrate_batch, simulate, switch_batch, switch_chart)
from .report import VerificationReport

FD_LAPLACE_STEP = 1e-4
EXACT_FLOOR = 1e-12


def _embed_final(model, records):
    chart = np.array([r.charts[-1] for r in records])
    xi = np.stack([r.xi[-1] for r in records])
    return model.embed(chart, xi)


def _embed_rows(model, records, k):
    chart = np.array([r.charts[k] for r in records])
    xi = np.stack([r.xi[k] for r in records])
    return model.embed(chart, xi)


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0


# -- frame invariant -----------------------------------------------------------


def frame_drift(record: TrajectoryRecord, model: ManifoldModel) -> float:
    """max over saved steps of |zeta^T g zeta - (initial Gram)|_inf."""
    gram = frame_gram_batch(model, record.charts, record.xi, record.zeta)
    return float(np.max(np.abs(gram - gram[0])))


def check_frame_invariant(record: TrajectoryRecord, model: ManifoldModel, tol: float = 0.05) -> VerificationReport:
    rep = VerificationReport(meta={"model": repr(model), "trajectory": record.index, "status": record.status})
    rep.add("frame.max_gram_drift", frame_drift(record, model), target=tol, rule="le")
    rep.add("frame.completed", record.completed, rule="true")
    return rep


def frame_refinement_study(model, A, B, init: FrameState, T: float, h: float, n_seeds: int = 20,
                           seed: int = 0, scheme=StepScheme.STRAT_HEUN, policy=EventSwitch(),
                           max_drift: float = 0.05, ratio_band=(1.5, 3.0)) -> VerificationReport:
    """Frame drift at h and h/2 on shared Brownian paths (one path per seed index)."""
    coarse = ensemble(model, A, B, init, T, h, scheme, policy, n_paths=n_seeds, seed=seed, fine_factor=2)
    fine = ensemble(model, A, B, init, T, h / 2, scheme, policy, n_paths=n_seeds, seed=seed)
    dc = np.array([frame_drift(r, model) for r in coarse])
    df = np.array([frame_drift(r, model) for r in fine])
    rep = VerificationReport(meta={"model": repr(model), "T": T, "h": h, "n_seeds": n_seeds, "seed": seed,
                                   "scheme": StepScheme(scheme).value})
    rep.add("frame.max_gram_drift", float(dc.max()), target=max_drift, rule="le")
    if max(dc.max(), df.max()) <= EXACT_FLOOR:
        # Flat metric with constant coefficients: the frame never moves, no ratio to take.
        rep.add("frame.drift_exact_zero", float(max(dc.max(), df.max())), target=0.0, tol=EXACT_FLOOR)
    else:
        rep.add("frame.refinement_ratio_median", float(np.median(dc / df)), target=list(ratio_band), tol=0.0,
                rule="range", drift_coarse=dc, drift_fine=df)
    rep.add("frame.all_completed", all(r.completed for r in coarse + fine), rule="true")
    return rep


def coefficient_conservation(sde: ChartSDE, t, chart, xi, zeta, step: float = 1e-6) -> float:
    """Max directional derivative of zeta^T g zeta along every Stratonovich field."""
    d = sde.d
    G, f, _ = sde.coefficients(t, chart, xi, zeta, ito=False)
    worst = 0.0
    for k in range(d + 1):
        v = f if k == d else G[:, :, k]
        yp = np.concatenate([xi, zeta.reshape(len(xi), -1)], axis=1) + step * v
        ym = yp - 2 * step * v
        gp = frame_gram_batch(sde.model, chart, yp[:, :d], yp[:, d:].reshape(-1, d, d))
        gm = frame_gram_batch(sde.model, chart, ym[:, :d], ym[:, d:].reshape(-1, d, d))
        worst = max(worst, float(np.abs((gp - gm) / (2 * step)).max()))
    return worst


def random_states(model: ManifoldModel, n: int, rng, radius: float = 0.99):
    """Random charts, points in radius*B and random g-orthonormal frames."""
    P = model.sample(n, rng)
    chart = model.partition_chart(P)
    v = rng.standard_normal((n, model.d))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    xi = v * (radius * rng.uniform(0, 1, n) ** (1.0 / model.d))[:, None]
    Q, _ = np.linalg.qr(rng.standard_normal((n, model.d, model.d)))
    zeta = orthonormal_frame_batch(model, chart, xi) @ Q
    return chart, xi, zeta


def ito_strat_fd_check(model: ManifoldModel, A, B, n_states: int = 100, seed: int = 0,
                       tol: float = 1e-6, step: float = 1e-6) -> VerificationReport:
    """ito_drift - strat_drift against central differences of the diffusion along itself."""
    rng = np.random.default_rng(seed)
    chart, xi, zeta = random_states(model, n_states, rng)
    sde = ChartSDE(model, A, B)
    _, f, fi = sde.coefficients(0.0, chart, xi, zeta, ito=True)
    oracle = fd_ito_correction(sde, 0.0, chart, xi, zeta, step)
    rep = VerificationReport(meta={"model": repr(model), "n_states": n_states, "seed": seed})
    rep.add("ito.fd_gap", float(np.abs(fi - f - oracle).max()), target=tol, rule="le")
    rep.add("frame.coefficient_conservation", coefficient_conservation(sde, 0.0, chart, xi, zeta),
            target=1e-8, rule="le")
    return rep


# -- test functions and the generator -----------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """phi on ambient points, with chart gradient and Hessian at a chart point."""

    name: str
    value: Callable
    derivatives: Callable

    __test__ = False


def ambient_linear(v) -> TestFunction:
    """phi(P) = v . P (Euclidean dot); cos d(x0, .) on the sphere when v = P(x0).

    The Hessian is a central difference of the analytic gradient J^T v.
    """
    v = np.asarray(v, dtype=float)

    def derivs(model, chart, x, step=1e-5):
        c = np.array([chart])
        grad = model.embed_jacobian(c, x[None])[0].T @ v
        hess = np.empty((model.d, model.d))
        for a in range(model.d):
            e = np.zeros(model.d)
            e[a] = step
            gp = model.embed_jacobian(c, (x + e)[None])[0].T @ v
            gm = model.embed_jacobian(c, (x - e)[None])[0].T @ v
            hess[a] = (gp - gm) / (2 * step)
        return grad, 0.5 * (hess + hess.T)

    return TestFunction("ambient_linear", lambda P: np.asarray(P) @ v, derivs)


def squared_distance_flat(center) -> TestFunction:
    """phi(P) = |P - center|^2 on Euclidean space."""
    center = np.asarray(center, dtype=float)

    def derivs(model, chart, x):
        P = model.embed(np.array([chart]), x[None])[0]
        return 2.0 * (P - center), 2.0 * np.eye(model.d)

    return TestFunction("squared_distance", lambda P: np.sum((np.asarray(P) - center) ** 2, axis=-1), derivs)


def constant_function(c: float = 1.0) -> TestFunction:
    return TestFunction("constant", lambda P: np.full(np.atleast_2d(P).shape[0], float(c)),
                        lambda model, chart, x: (np.zeros(model.d), np.zeros((model.d, model.d))))


def generator_value(model, A, B, p: ChartPoint, phi: TestFunction, t: float = 0.0) -> float:
    """(B + 1/2 nabla A . A) . grad phi + 1/2 sigma : Hess phi at p."""
    c, x = np.array([p.chart]), p.x[None]
    a, da = A.evaluate(model, t, c, x)
    b, _ = B.evaluate(model, t, c, x)
    _, g_inv, _, gamma, _ = connection_batch(model, c, x, derivatives=False)
    sigma, _, drift = generator_data_batch(a, da, b, g_inv, gamma)
    grad, hess = phi.derivatives(model, p.chart, p.x)
    return float(drift[0] @ grad + 0.5 * np.sum(sigma[0] * hess))


def generator_residual(model, A, B, x0: ChartPoint, phi: TestFunction, T: float, h: float,
                       n_paths: int, seed: int = 0, slack: float | None = None,
                       scheme=StepScheme.STRAT_HEUN, workers: int = 1) -> VerificationReport:
    """Compare (E phi(X_T) - phi(x0)) / T with the generator applied to phi at x0.

    Passes when the gap is within 3 SE + ``slack`` (default 0.1 T, the
    semigroup's O(T) term for the built-in cases).
    """
    init = orthonormal_frame_at(model, x0)
    recs = ensemble(model, A, B, init, T, h, scheme, EventSwitch(), n_paths=n_paths, seed=seed,
                    save_steps=[], workers=workers)
    P0 = model.embed(np.array([x0.chart]), x0.x[None])
    vals = (phi.value(_embed_final(model, recs)) - phi.value(P0)[0]) / T
    est, se = _mean_se(vals)
    target = generator_value(model, A, B, x0, phi)
    rep = VerificationReport(meta={"model": repr(model), "phi": phi.name, "T": T, "h": h,
                                   "n_paths": n_paths, "seed": seed})
    rep.add("generator.residual", est - target, target=0.0, tol=0.1 * T if slack is None else slack, se=se,
            estimate=est, generator_value=target)
    return rep


# -- eigenfunction decay on the sphere ---------------------------------------


def eigenfunction_decay_check(model: ManifoldModel, times=(0.25, 0.5, 1.0), n_paths: int = 10_000,
                              h: float = 1e-3, seed: int = 0, bias: float = 0.02,
                              scheme=StepScheme.STRAT_HEUN, x0: ChartPoint | None = None,
                              workers: int = 1) -> VerificationReport:
    """E[cos d(x0, X_t)] = exp(-d t / 2) for Brownian motion on the unit sphere S^d."""
    if not isinstance(model, Sphere):
        raise ValueError("eigenfunction decay is defined for the sphere model")
    x0 = x0 or ChartPoint(0, np.zeros(model.d))
    init = orthonormal_frame_at(model, x0)
    T = max(times)
    steps = [int(round(t / h)) for t in times]
    recs = ensemble(model, IdentityTensor(), ZeroVector(), init, T, h, scheme, EventSwitch(),
                    n_paths=n_paths, seed=seed, save_steps=steps, workers=workers)
    P0 = model.embed(np.array([x0.chart]), x0.x[None])
    saved = list(recs[0].times)
    rep = VerificationReport(meta={"model": repr(model), "n_paths": n_paths, "h": h, "seed": seed,
                                   "scheme": StepScheme(scheme).value})
    for t in times:
        k = int(np.argmin(np.abs(np.asarray(saved) - t)))
        c = np.cos(model.distance(P0, _embed_rows(model, recs, k)))
        est, se = _mean_se(c)
        rep.add(f"eigen.cos_distance_t={t:g}", est, target=math.exp(-model.d * t / 2.0), tol=bias, se=se)
    rep.add("eigen.all_completed", all(r.completed for r in recs), rule="true")
    return rep


def weak_scheme_agreement(model: ManifoldModel, A, B, x0: ChartPoint, phi: TestFunction, T: float,
                          h: float, n_paths: int, seed: int = 0, workers: int = 1) -> VerificationReport:
    """E phi(X_T) under ItoEuler vs StratHeun, within 3 combined SE."""
    init = orthonormal_frame_at(model, x0)
    means = {}
    for scheme in (StepScheme.STRAT_HEUN, StepScheme.ITO_EULER):
        recs = ensemble(model, A, B, init, T, h, scheme, EventSwitch(), n_paths=n_paths, seed=seed,
                        save_steps=[], workers=workers)
        means[scheme] = _mean_se(phi.value(_embed_final(model, recs)))
    (m1, s1), (m2, s2) = means[StepScheme.STRAT_HEUN], means[StepScheme.ITO_EULER]
    rep = VerificationReport(meta={"model": repr(model), "T": T, "h": h, "n_paths": n_paths, "seed": seed})
    rep.add("ito.weak_mean_gap", m1 - m2, target=0.0, tol=0.0, se=math.hypot(s1, s2),
            strat_heun=m1, ito_euler=m2)
    return rep


# -- flow moments --------------------------------------------------------------


@dataclass
class MomentStudy:
    dt_grid: list
    p_grid: list
    estimates: dict = field(default_factory=dict)
    std_errors: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    used: dict = field(default_factory=dict)

    def report(self, slope_targets: dict | None = None, model_name: str = "") -> VerificationReport:
        """Slope entries; ``slope_targets[p] = (lo, hi)`` adds pass bands."""
        rep = VerificationReport(meta={"model": model_name, "dt_grid": self.dt_grid, "p_grid": self.p_grid})
        for p in self.p_grid:
            band = (slope_targets or {}).get(p)
            if band is None:
                rep.add(f"flow.slope_p={p:g}", self.slopes[p], target=0.0, rule="gt",
                        estimates=self.estimates[p], std_errors=self.std_errors[p])
            else:
                rep.add(f"flow.slope_p={p:g}", self.slopes[p], target=list(band), tol=0.0, rule="range",
                        estimates=self.estimates[p], std_errors=self.std_errors[p])
        return rep


def fit_loglog(x, y, se=None, max_rel_se: float = 0.2):
    """Least-squares slope of log y vs log x over points with y > 0 and se/y < max_rel_se."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > 0
    if se is not None:
        keep &= np.asarray(se) < max_rel_se * np.where(y > 0, y, np.inf)
    if keep.sum() < 2:
        return math.nan, keep
    slope = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0]
    return float(slope), keep


def flow_moment_study(model: ManifoldModel, B=None, x0: ChartPoint | None = None, p_grid=(2.0,),
                      dt_grid=None, n_paths: int = 10_000, seed: int = 0, h: float = 1e-4, A=None,
                      workers: int = 1) -> MomentStudy:
    """E[d^p(X_0, X_dt)] for the process started at x0, with log-log slopes.

    The flow estimate is stated for A = identity; another A may be passed but
    no acceptance bands are attached to it.
    """
    A = A or IdentityTensor()
    B = B or ZeroVector()
    x0 = x0 or ChartPoint(0, np.zeros(model.d))
    if dt_grid is None:
        dt_grid = list(np.geomspace(1e-3, 1e-1, 7))
    steps = sorted({max(1, int(round(dt / h))) for dt in dt_grid})
    dts = [k * h for k in steps]
    init = orthonormal_frame_at(model, x0)
    recs = ensemble(model, A, B, init, dts[-1], h, StepScheme.STRAT_HEUN, EventSwitch(), n_paths=n_paths,
                    seed=seed, save_steps=steps, workers=workers)
    P0 = model.embed(np.array([x0.chart]), x0.x[None])
    saved = list(np.round(recs[0].times / h).astype(int))
    study = MomentStudy(dt_grid=dts, p_grid=list(p_grid))
    for p in p_grid:
        est, ses = [], []
        for k in steps:
            dist = model.distance(P0, _embed_rows(model, recs, saved.index(k)))
            m, s = _mean_se(dist ** p)
            est.append(m)
            ses.append(s)
        slope, keep = fit_loglog(dts, est, ses)
        study.estimates[p], study.std_errors[p], study.slopes[p] = est, ses, slope
        study.used[p] = keep.tolist()
    return study


# -- exit probabilities --------------------------------------------------------


def exit_probability_study(model: ManifoldModel, A, B, chart: int, x0, rho: float | None = None,
                           dt_grid=None, n_paths: int = 10_000, seed: int = 0, h: float | None = None,
                           slope_min: float = 1.6, chunk: int = 1024) -> VerificationReport:
    """P(sup_{u <= dt} |xi_u - xi_0| > rho) in a fixed chart, with a log-log slope fit.

    Default rho is one coordinate standard deviation at the largest lag,
    sqrt(dt_max * sigma^11(x0)); default dt_grid = dt_max * 2^(-k/2), k = 0..8,
    which samples the tail more densely than the saturated large-lag end.
    Grid values are snapped to multiples of the step h.
    """
    x0 = np.asarray(x0, dtype=float)
    params = BumpParams(model.r)
    if dt_grid is None:
        dt_grid = [0.01 * 2.0 ** (-k / 2) for k in range(8, -1, -1)]
    dt_grid = sorted(dt_grid)
    dt_max = dt_grid[-1]
    if rho is None:
        c, x = np.array([chart]), x0[None]
        a, da = A.evaluate(model, 0.0, c, x)
        _, g_inv, _, gamma, _ = connection_batch(model, c, x, derivatives=False)
        sigma = generator_data_batch(a, da, np.zeros((1, model.d)), g_inv, gamma)[0][0]
        rho = math.sqrt(dt_max * sigma[0, 0])
    if np.linalg.norm(x0) + rho >= params.inner:
        raise ValueError("need |x0| + rho < inner bump radius")
    h = h or dt_grid[0] / 64
    n_steps = int(round(dt_max / h))
    steps = sorted({max(1, int(round(dt / h))) for dt in dt_grid})
    dt_grid = [k * h for k in steps]
    marks = {k: i for i, k in enumerate(steps)}
    exited = np.zeros((len(dt_grid), n_paths), dtype=bool)
    init = orthonormal_frame_at(model, ChartPoint(chart, x0))
    for start in range(0, n_paths, chunk):
        idx = range(start, min(start + chunk, n_paths))
        dW = np.stack([NoiseSource(seed, i).increments(n_steps, h, model.d) for i in idx])
        n = len(idx)
        sup = np.zeros(n)

        def observe(k, ch, xi, zeta, status, sup=sup, start=start, n=n):
            np.maximum(sup, np.linalg.norm(xi - x0, axis=-1), out=sup)
            if k in marks:
                exited[marks[k], start:start + n] = sup > rho

        integrate_batch(model, A, B, np.full(n, chart), np.repeat(x0[None], n, 0),
                        np.repeat(init.zeta[None], n, 0), dW, h, StepScheme.STRAT_HEUN, NoSwitch(),
                        save_steps=[], observer=observe)
    prob = exited.mean(axis=1)
    se = np.sqrt(prob * (1 - prob) / n_paths)
    usable = prob > 10.0 / n_paths
    slope = math.nan
    C = math.nan
    if usable.sum() >= 2:
        slope = float(np.polyfit(np.log(np.asarray(dt_grid)[usable]), np.log(prob[usable]), 1)[0])
        C = float(np.max(prob[usable] / np.asarray(dt_grid)[usable] ** 2))
    monotone = bool(np.all(np.diff(prob) >= -3.0 * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)))
    rep = VerificationReport(meta={"model": repr(model), "chart": chart, "x0": x0, "rho": rho, "h": h,
                                   "dt_grid": dt_grid, "n_paths": n_paths, "seed": seed})
    rep.add("exit.slope", slope, target=slope_min, rule="ge", probabilities=prob, std_errors=se, fitted_C=C)
    rep.add("exit.monotone", monotone, rule="true")
    return rep


# -- Laplacian comparison ------------------------------------------------------


def laplacian_of_distance(model: ManifoldModel, P0, Q, step: float = FD_LAPLACE_STEP) -> float:
    """Delta_g r at Q for r = d(P0, .), by the coordinate formula with FD derivatives.

    Delta_g f = g^ij d_ij f - g^ij Gamma^k_ij d_k f, evaluated in the chart
    where Q is most central. Central differences at steps h and 2h are
    Richardson-combined, (4 L(h) - L(2h)) / 3, to cancel the O(h^2) term.
    """
    return (4.0 * _fd_laplacian(model, P0, Q, step) - _fd_laplacian(model, P0, Q, 2.0 * step)) / 3.0


def _fd_laplacian(model, P0, Q, step):
    Q = np.atleast_2d(Q)
    chart = model.central_chart(Q)
    x = model.coords(chart, Q)[0]
    d = model.d
    P0 = np.atleast_2d(P0)

    def f(y):
        return float(model.distance(P0, model.embed(chart, y[None]))[0])

    f0 = f(x)
    grad = np.empty(d)
    hess = np.empty((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = step
        fp, fm = f(x + ei), f(x - ei)
        grad[i] = (fp - fm) / (2 * step)
        hess[i, i] = (fp - 2 * f0 + fm) / step ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = step
            hess[i, j] = hess[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) \
                / (4 * step ** 2)
    _, g_inv, _, gamma, _ = connection_batch(model, chart, x[None], derivatives=False)
    g_inv, gamma = g_inv[0], gamma[0]
    return float(np.sum(g_inv * hess) - np.einsum("ij,kij,k->", g_inv, gamma, grad))


def comparison_bounds(model: ManifoldModel, r: float):
    """((n-1) K1 cot(K1 r), (n-1) K2 coth(K2 r)) with the (n-1)/r limits at K = 0."""
    K1, K2 = model.curvature_bounds
    n1 = model.d - 1
    lower = n1 / r if K1 == 0 else n1 * K1 / math.tan(K1 * r)
    upper = n1 / r if K2 == 0 else n1 * K2 / math.tanh(K2 * r)
    return lower, upper


def exact_laplacian_distance(model: ManifoldModel, r: float) -> float:
    """Delta_g r on the constant-curvature gallery models."""
    k = model.sectional_constant
    n1 = model.d - 1
    if k > 0:
        s = math.sqrt(k)
        return n1 * s / math.tan(s * r)
    if k < 0:
        s = math.sqrt(-k)
        return n1 * s / math.tanh(s * r)
    return n1 / r


def laplacian_comparison_check(model: ManifoldModel, x0=None, r_grid=None, seed: int = 0,
                               slack: float = 1e-3, exact_tol: float | None = None,
                               n_directions: int = 3) -> VerificationReport:
    """Both comparison inequalities and the constant-curvature value at every grid radius."""
    rng = np.random.default_rng(seed)
    P0 = model.ambient_origin if x0 is None else np.asarray(x0, dtype=float)
    if r_grid is None:
        r_max = min(1.5, 0.9 * model.injectivity_radius)
        r_grid = list(np.linspace(0.1, r_max, 8))
    if exact_tol is None:
        exact_tol = 1e-6 if model.sectional_constant == 0 else 1e-3
    measured, lows, highs, exact = [], [], [], []
    for r in r_grid:
        for _ in range(n_directions):
            Q = model.point_at_distance(P0, r, rng)
            measured.append(laplacian_of_distance(model, P0, Q))
            lo, hi = comparison_bounds(model, r)
            lows.append(lo)
            highs.append(hi)
            exact.append(exact_laplacian_distance(model, r))
    m = np.array(measured)
    rep = VerificationReport(meta={"model": repr(model), "r_grid": list(map(float, r_grid)),
                                   "n_directions": n_directions, "seed": seed})
    rep.add("laplacian.lower_bound_margin", float(np.min(m - np.array(lows))), target=-slack, rule="ge")
    rep.add("laplacian.upper_bound_margin", float(np.min(np.array(highs) - m)), target=-slack, rule="ge")
    rep.add("laplacian.exact_value_gap", float(np.max(np.abs(m - np.array(exact)))), target=exact_tol,
            rule="le")
    return rep


# -- chart-change coherence ----------------------------------------------------


def _final_points(model, res):
    return model.embed(res["charts"][-1], res["xi"][-1]), res["charts"][-1], res["xi"][-1], res["zeta"][-1]


def transition_gaps(model, A, B, init: FrameState, to: int, T: float, h: float, indices, seed: int,
                    fine_factor: int = 1, scheme=StepScheme.STRAT_HEUN):
    """Per-path gaps between integrating natively in init.chart and in chart ``to``.

    Both runs use NoSwitch and identical noise; the endpoint in chart ``to``
    is mapped back to the native chart. Returns (geodesic gaps, max-abs
    coordinate gaps of (xi, zeta)).
    """
    other = switch_chart(model, init, to)
    n_steps = int(round(T / h))
    dW = np.stack([NoiseSource(seed, i).increments(n_steps, h, model.d, fine_factor) for i in indices])
    n = len(indices)
    rows = []
    for st in (init, other):
        res = integrate_batch(model, A, B, np.full(n, st.chart), np.repeat(st.xi[None], n, 0),
                              np.repeat(st.zeta[None], n, 0), dW, h, scheme, NoSwitch(), save_steps=[])
        rows.append(res)
    Pa, ca, xa, za = _final_points(model, rows[0])
    Pb, cb, xb, zb = _final_points(model, rows[1])
    xb2, zb2 = switch_batch(model, cb, xb, zb, ca)
    coord = np.maximum(np.abs(xb2 - xa).max(axis=1), np.abs(zb2 - za).max(axis=(1, 2)))
    return model.distance(Pa, Pb), coord


def transition_horizon(model: ManifoldModel, A, init: FrameState, to: int, n_std: float = 5.0,
                       T_max: float = 0.01) -> float:
    """Largest T <= T_max keeping both chart paths n_std coordinate deviations away from the bump shell."""
    inner = BumpParams(model.r).inner
    other = switch_chart(model, init, to)
    T = T_max
    for st in (init, other):
        c, x = np.array([st.chart]), st.xi[None]
        a, da = A.evaluate(model, 0.0, c, x)
        _, g_inv, _, gamma, _ = connection_batch(model, c, x, derivatives=False)
        sigma = generator_data_batch(a, da, np.zeros((1, model.d)), g_inv, gamma)[0][0]
        speed = float(np.linalg.eigvalsh(sigma).max())
        margin = inner - float(np.linalg.norm(st.xi))
        if speed > 0.0:
            T = min(T, (margin / n_std) ** 2 / speed)
    return T


def transition_consistency_check(model: ManifoldModel, A, B, init: FrameState, to: int, T: float | None = None,
                                 h: float | None = None, n_seeds: int = 20, paths_per_seed: int = 8,
                                 seed: int = 0, ratio_band=(1.5, 3.0)) -> VerificationReport:
    """Endpoint gap at h and h/2 on shared noise; median over seeds of the halving ratio.

    Each seed's gap is the mean geodesic endpoint gap over ``paths_per_seed``
    trajectories (indices seed*paths_per_seed + j), which tames the ratio's
    path-to-path spread. Default T comes from ``transition_horizon`` so paths
    stay out of the bump shell, where the two localized systems genuinely
    differ; default h = T / 10.
    """
    T = transition_horizon(model, A, init, to) if T is None else T
    h = T / 10.0 if h is None else h
    idx = list(range(n_seeds * paths_per_seed))
    g1, _ = transition_gaps(model, A, B, init, to, T, h, idx, seed, fine_factor=2)
    g2, _ = transition_gaps(model, A, B, init, to, T, h / 2, idx, seed)
    s1 = g1.reshape(n_seeds, paths_per_seed).mean(axis=1)
    s2 = g2.reshape(n_seeds, paths_per_seed).mean(axis=1)
    rep = VerificationReport(meta={"model": repr(model), "from": init.chart, "to": to, "T": T, "h": h,
                                   "n_seeds": n_seeds, "paths_per_seed": paths_per_seed, "seed": seed})
    if max(s1.max(), s2.max()) <= EXACT_FLOOR:
        # Affine transitions with flat coefficients commute with the scheme exactly.
        rep.add("transition.gap_exact_zero", float(max(s1.max(), s2.max())), target=0.0, tol=EXACT_FLOOR)
    else:
        rep.add("transition.gap_ratio_median", float(np.median(s1 / s2)), target=list(ratio_band), tol=0.0,
                rule="range", gap_h=s1, gap_h2=s2)
    return rep


def overlap_partner(model: ManifoldModel, state: FrameState, radius: float = 0.75) -> int | None:
    """Another chart holding the state's point with |x| < radius (most central first), or None."""
    P = model.embed(np.array([state.chart]), state.xi[None])[0]
    ids, norms = model.chart_norms(P)
    order = np.argsort(norms)
    for i in order:
        if int(ids[i]) != state.chart and norms[i] < radius:
            return int(ids[i])
    return None


def find_overlap_state(model: ManifoldModel, seed: int = 0, radius: float = 0.75,
                       n_candidates: int = 2000) -> tuple[FrameState, int]:
    """A g-orthonormal state whose point lies well inside two charts, plus the partner chart.

    Picks the sampled point minimizing the larger of its two smallest chart norms.
    """
    rng = np.random.default_rng(seed)
    P = model.sample(n_candidates, rng)
    best = None
    for point in P:
        ids, norms = model.chart_norms(point)
        if len(ids) < 2:
            continue
        order = np.argsort(norms)[:2]
        score = float(norms[order[1]])
        if best is None or score < best[0]:
            best = (score, int(ids[order[0]]), int(ids[order[1]]), point)
    if best is None or best[0] >= radius:
        raise ValueError("no overlap point found")
    _, home, partner, point = best
    x = model.coords(np.array([home]), point[None])[0]
    return orthonormal_frame_at(model, ChartPoint(home, x)), partner


# -- holonomy ------------------------------------------------------------------


def holonomy_angle(model: Sphere, colatitude: float = math.pi / 3, n_steps: int = 4000) -> float:
    """Rotation angle of a frame transported once around a latitude circle of S^2.

    The circle is traced by the Killing field of rotations about the polar
    axis (period 2 pi) with A = 0. Angle returned in (-pi, pi].
    """
    if model.d != 2:
        raise ValueError("holonomy check is for S^2")
    P = np.array([[math.sin(colatitude), 0.0, math.cos(colatitude)]])
    chart = int(model.central_chart(P)[0])
    x = model.coords(np.array([chart]), P)[0]
    init = orthonormal_frame_at(model, ChartPoint(chart, x))
    T = 2.0 * math.pi
    rec = simulate(model, ZeroTensor(), AmbientRotation(1.0, (0, 1)), init, T, T / n_steps,
                   policy=EventSwitch(), noise=0, save_steps=[], keep_noise=False)
    fin = rec.final
    if fin.chart != chart:
        fin = switch_chart(model, fin, chart)
    R = np.linalg.solve(init.zeta, fin.zeta)
    return float(math.atan2(R[1, 0], R[0, 0]))


def holonomy_check(model: Sphere, colatitude: float = math.pi / 3, n_steps: int = 4000,
                   tol: float = 1e-3) -> VerificationReport:
    expected = 2.0 * math.pi * (1.0 - math.cos(colatitude))
    angle = holonomy_angle(model, colatitude, n_steps)
    gap = abs((angle - expected + math.pi) % (2.0 * math.pi) - math.pi)
    rep = VerificationReport(meta={"model": repr(model), "colatitude": colatitude, "n_steps": n_steps})
    rep.add("holonomy.angle_error", gap, target=tol, rule="le", angle=angle, expected=expected)
    return rep
