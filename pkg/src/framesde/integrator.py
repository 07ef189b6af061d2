"""Time stepping, chart switching, noise and trajectory recording.

Paths are integrated in batches: every per-path quantity carries a leading
path axis. One global Brownian path in R^d drives each trajectory; chart
switches transform (xi, zeta) and never the noise.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .chart_sde import BumpParams, ChartSDE, FrameState, frame_gram_batch
from .errors import FrameBlowup, LeftAtlas, PointOutsideChart
from .geometry.models import ManifoldModel

DEFAULT_CHUNK = 512
ORTHONORMAL_TOL = 1e-8


class StepScheme(str, Enum):
    STRAT_HEUN = "strat_heun"
    ITO_EULER = "ito_euler"


@dataclass(frozen=True)
class EventSwitch:
    """Re-anchor whenever |xi| reaches ``threshold`` (default: the bump's inner radius)."""

    threshold: float | None = None


@dataclass(frozen=True)
class GridSwitch:
    """Re-anchor to the first-match partition chart at t_k = k T / m.

    ``m = None`` picks ceil(10 T / ((1 - r) / 3)^2), capped at the step count.
    """

    m: int | None = None


@dataclass(frozen=True)
class NoSwitch:
    """Stay in the initial chart (the bump freezes the path near the chart edge)."""


SwitchPolicy = EventSwitch | GridSwitch | NoSwitch


def default_grid_m(T: float, r: float) -> int:
    return math.ceil(10.0 * T / ((1.0 - r) / 3.0) ** 2)


@dataclass(frozen=True)
class NoiseSource:
    """Brownian increments for one trajectory, reproducible from (seed, index).

    ``increments(n, h, fine_factor=f)`` draws n*f standard normals of step h/f
    and sums consecutive groups of f, so runs at h and h/2 can share one path.
    """

    seed: int
    index: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(self.seed), int(self.index)])))

    def increments(self, n_steps: int, h: float, d: int, fine_factor: int = 1) -> np.ndarray:
        z = self.generator().standard_normal((n_steps * fine_factor, d)) * math.sqrt(h / fine_factor)
        if fine_factor == 1:
            return z
        return z.reshape(n_steps, fine_factor, d).sum(axis=1)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    charts: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    switched: np.ndarray
    switches: list = field(default_factory=list)
    status: str = "completed"
    increments: np.ndarray | None = None
    index: int = 0

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def state(self, k: int = -1) -> FrameState:
        return FrameState(chart=int(self.charts[k]), xi=self.xi[k], zeta=self.zeta[k])

    @property
    def final(self) -> FrameState:
        return self.state(-1)


# -- single steps --------------------------------------------------------------


def _apply(y_xi, y_zeta, vec):
    n, d = y_xi.shape
    return y_xi + vec[:, :d], y_zeta + vec[:, d:].reshape(n, d, d)


def step_batch(scheme, sde: ChartSDE, t, h, chart, xi, zeta, dW):
    """One step for every row; returns (xi, zeta, predictor xi)."""
    scheme = StepScheme(scheme)
    if scheme is StepScheme.ITO_EULER:
        G, _, f = sde.coefficients(t, chart, xi, zeta, ito=True)
        inc = f * h + (G @ dW[:, :, None])[:, :, 0]
        x1, z1 = _apply(xi, zeta, inc)
        return x1, z1, x1
    G, f, _ = sde.coefficients(t, chart, xi, zeta, ito=False)
    xp, zp = _apply(xi, zeta, f * h + (G @ dW[:, :, None])[:, :, 0])
    Gp, fp, _ = sde.coefficients(t + h, chart, xp, zp, ito=False)
    inc = 0.5 * (f + fp) * h + 0.5 * ((G + Gp) @ dW[:, :, None])[:, :, 0]
    x1, z1 = _apply(xi, zeta, inc)
    return x1, z1, xp


def _guard(sde: ChartSDE, xi, zeta):
    """Row status after a step: 0 ok, 1 frame blowup, 2 left the chart ball."""
    bad_frame = np.max(np.linalg.norm(zeta, axis=1), axis=-1) > 2.0 * sde.model.K ** 2
    nrm = np.linalg.norm(xi, axis=-1)
    bad_point = ~np.isfinite(nrm) | (nrm >= 1.0) | ~np.all(np.isfinite(zeta), axis=(1, 2))
    return np.where(bad_point, 2, np.where(bad_frame, 1, 0))


def step(scheme, sde: ChartSDE, state: FrameState, t: float, h: float, dW) -> FrameState:
    """Advance one state by one step. Raises FrameBlowup / PointOutsideChart."""
    if h <= 0:
        raise ValueError("h must be positive")
    x1, z1, _ = step_batch(scheme, sde, t, h, np.array([state.chart]), state.xi[None], state.zeta[None],
                           np.asarray(dW, dtype=float)[None])
    code = _guard(sde, x1, z1)[0]
    if code == 2:
        raise PointOutsideChart("step left the chart ball")
    if code == 1:
        raise FrameBlowup("frame column norm exceeded 2K^2")
    return FrameState(chart=state.chart, xi=x1[0], zeta=z1[0])


def switch_batch(model: ManifoldModel, chart, xi, zeta, to):
    xb, J = model.transition_batch(chart, to, xi)
    return xb, np.einsum("nik,nkm->nim", J, zeta)


def switch_chart(model: ManifoldModel, state: FrameState, to: int) -> FrameState:
    """Re-express the state in chart ``to``: (x_bar(xi), J zeta)."""
    from .geometry.models import transition

    if to == state.chart:
        return state
    xb, J = transition(model, state.chart, to, state.xi)
    return FrameState(chart=to, xi=xb, zeta=J @ state.zeta)


# -- batched driver ------------------------------------------------------------


class _Batch:
    def __init__(self, model, chart, xi, zeta):
        self.model = model
        self.chart = np.asarray(chart, dtype=np.int64).copy()
        self.xi = np.array(xi, dtype=float)
        self.zeta = np.array(zeta, dtype=float)
        n = len(self.chart)
        self.status = np.zeros(n, dtype=np.int64)
        self.switched = np.zeros(n, dtype=bool)
        self.switches = [[] for _ in range(n)]

    def move(self, rows, to, t):
        """Switch ``rows`` into charts ``to`` (rows already in ``to`` are skipped)."""
        keep = to != self.chart[rows]
        rows, to = rows[keep], to[keep]
        if rows.size == 0:
            return rows
        xb, zb = switch_batch(self.model, self.chart[rows], self.xi[rows], self.zeta[rows], to)
        for r, a, b in zip(rows, self.chart[rows], to):
            self.switches[r].append((float(t), int(a), int(b)))
        self.chart[rows], self.xi[rows], self.zeta[rows] = to, xb, zb
        self.switched[rows] = True
        return rows

    def targets(self, rows, rule):
        P = self.model.embed(self.chart[rows], self.xi[rows])
        if rule == "central":
            return self.model.central_chart(P)
        return self.model.partition_chart(P)


def _step_indices(n_steps, save_stride, save_steps):
    if save_steps is not None:
        s = sorted({int(k) for k in save_steps} | {0, n_steps})
    else:
        s = sorted(set(range(0, n_steps + 1, max(1, int(save_stride)))) | {n_steps})
    if s[0] < 0 or s[-1] > n_steps:
        raise ValueError("save steps must lie in [0, n_steps]")
    return s


def integrate_batch(model: ManifoldModel, A, B, chart, xi, zeta, dW, h: float,
                    scheme=StepScheme.STRAT_HEUN, policy: SwitchPolicy = EventSwitch(),
                    t0: float = 0.0, save_stride: int = 1, save_steps: Sequence[int] | None = None,
                    params: BumpParams | None = None, observer: Callable | None = None):
    """Integrate rows of (chart, xi, zeta) with increments dW[n, step, d].

    Returns a dict of saved arrays (times, charts, xi, zeta, switched), plus
    per-row status codes and switch logs. ``observer(k, chart, xi, zeta, status)``
    is called with the state after every step k (k = 1..n_steps).
    """
    sde = ChartSDE(model, A, B, params)
    n, n_steps, d = dW.shape
    T = n_steps * h
    bp = sde.params
    b = _Batch(model, chart, xi, zeta)
    saves = _step_indices(n_steps, save_stride, save_steps)
    save_pos = {k: i for i, k in enumerate(saves)}
    out_chart = np.empty((len(saves), n), dtype=np.int64)
    out_xi = np.empty((len(saves), n, d))
    out_zeta = np.empty((len(saves), n, d, d))
    out_sw = np.zeros((len(saves), n), dtype=bool)

    grid = set()
    if isinstance(policy, GridSwitch):
        m = min(policy.m or default_grid_m(T, bp.r), n_steps)
        grid = {int(round(j * n_steps / m)) for j in range(m)}
    threshold = bp.inner
    if isinstance(policy, EventSwitch) and policy.threshold is not None:
        threshold = float(policy.threshold)

    def save(k):
        i = save_pos[k]
        out_chart[i], out_xi[i], out_zeta[i], out_sw[i] = b.chart, b.xi, b.zeta, b.switched
        b.switched[:] = False

    for k in range(n_steps):
        t = t0 + k * h
        live = np.flatnonzero(b.status == 0)
        if isinstance(policy, EventSwitch):
            far = live[np.linalg.norm(b.xi[live], axis=-1) >= threshold]
            if far.size:
                b.move(far, b.targets(far, "central"), t)
        elif isinstance(policy, GridSwitch):
            rows = live if k in grid else live[np.linalg.norm(b.xi[live], axis=-1) >= bp.outer]
            if rows.size:
                b.move(rows, b.targets(rows, "partition"), t)
        if k in save_pos:
            save(k)
        if live.size == 0:
            continue
        x1, z1, xp = step_batch(scheme, sde, t, h, b.chart[live], b.xi[live], b.zeta[live], dW[live, k])
        if isinstance(policy, EventSwitch):
            # predictor reached the shell: retry from the best chart if there is a better one
            reach = np.flatnonzero(np.linalg.norm(xp, axis=-1) >= threshold)
            if reach.size:
                rows = live[reach]
                moved = b.move(rows, b.targets(rows, "central"), t)
                if moved.size:
                    sel = np.searchsorted(live, moved)
                    x1[sel], z1[sel], _ = step_batch(scheme, sde, t, h, b.chart[moved], b.xi[moved],
                                                     b.zeta[moved], dW[moved, k])
        code = _guard(sde, x1, z1)
        ok = code == 0
        b.xi[live[ok]], b.zeta[live[ok]] = x1[ok], z1[ok]
        b.status[live[~ok]] = code[~ok]
        if observer is not None:
            observer(k + 1, b.chart, b.xi, b.zeta, b.status)
    save(n_steps)
    times = t0 + h * np.asarray(saves, dtype=float)
    return {"times": times, "charts": out_chart, "xi": out_xi, "zeta": out_zeta, "switched": out_sw,
            "status": b.status, "switches": b.switches, "save_steps": saves}


STATUS = {0: "completed", 1: "aborted:FrameBlowup", 2: "aborted:LeftAtlas"}


def _n_steps(T, h):
    if T <= 0 or h <= 0 or h > T:
        raise ValueError("need T > 0 and 0 < h <= T")
    n = int(round(T / h))
    if abs(n * h - T) > 1e-9 * max(T, 1.0):
        raise ValueError("h must divide T")
    return n


def _check_orthonormal(model, states):
    chart = np.array([s.chart for s in states])
    xi = np.stack([s.xi for s in states])
    zeta = np.stack([s.zeta for s in states])
    if np.any(np.linalg.norm(xi, axis=-1) >= 1.0):
        raise PointOutsideChart("initial point outside its chart ball")
    gram = frame_gram_batch(model, chart, xi, zeta)
    if np.max(np.abs(gram - np.eye(model.d))) > ORTHONORMAL_TOL:
        raise ValueError("initial frame is not g-orthonormal")
    return chart, xi, zeta


def _records(res, indices, noise=None):
    recs = []
    for j, idx in enumerate(indices):
        recs.append(TrajectoryRecord(
            times=res["times"], charts=res["charts"][:, j], xi=res["xi"][:, j], zeta=res["zeta"][:, j],
            switched=res["switched"][:, j], switches=res["switches"][j], status=STATUS[int(res["status"][j])],
            increments=None if noise is None else noise[j], index=int(idx)))
    return recs


def simulate(model: ManifoldModel, A, B, init: FrameState, T: float, h: float,
             scheme=StepScheme.STRAT_HEUN, policy: SwitchPolicy = EventSwitch(),
             noise: NoiseSource | int = 0, save_stride: int = 1, save_steps=None,
             fine_factor: int = 1, keep_noise: bool = True) -> TrajectoryRecord:
    """One trajectory on [0, T] driven by ``noise`` (a NoiseSource or a seed)."""
    n_steps = _n_steps(T, h)
    if not isinstance(noise, NoiseSource):
        noise = NoiseSource(int(noise), 0)
    chart, xi, zeta = _check_orthonormal(model, [init])
    dW = noise.increments(n_steps, h, model.d, fine_factor)[None]
    res = integrate_batch(model, A, B, chart, xi, zeta, dW, h, scheme, policy,
                          save_stride=save_stride, save_steps=save_steps)
    return _records(res, [noise.index], dW if keep_noise else None)[0]


@dataclass(frozen=True)
class _Job:
    model: ManifoldModel
    A: object
    B: object
    states: tuple
    indices: tuple
    T: float
    h: float
    scheme: str
    policy: object
    seed: int
    save_stride: int
    save_steps: tuple | None
    fine_factor: int
    keep_noise: bool


def _run_job(job: _Job):
    n_steps = _n_steps(job.T, job.h)
    chart = np.array([s.chart for s in job.states], dtype=np.int64)
    xi = np.stack([s.xi for s in job.states])
    zeta = np.stack([s.zeta for s in job.states])
    dW = np.stack([NoiseSource(job.seed, i).increments(n_steps, job.h, job.model.d, job.fine_factor)
                   for i in job.indices])
    res = integrate_batch(job.model, job.A, job.B, chart, xi, zeta, dW, job.h, job.scheme, job.policy,
                          save_stride=job.save_stride, save_steps=job.save_steps)
    return _records(res, job.indices, dW if job.keep_noise else None)


def ensemble(model: ManifoldModel, A, B, init, T: float, h: float, scheme=StepScheme.STRAT_HEUN,
             policy: SwitchPolicy = EventSwitch(), n_paths: int = 1, seed: int = 0, workers: int = 1,
             save_stride: int = 1, save_steps=None, fine_factor: int = 1, keep_noise: bool = False,
             chunk_size: int = DEFAULT_CHUNK, first_index: int = 0) -> list[TrajectoryRecord]:
    """Independent trajectories indexed first_index .. first_index + n_paths - 1.

    ``init`` is a FrameState shared by all paths, a sequence of states, or a
    callable index -> FrameState. Paths are grouped into chunks of fixed
    size, so the result does not depend on ``workers``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    n_steps = _n_steps(T, h)
    indices = list(range(first_index, first_index + n_paths))
    if isinstance(init, FrameState):
        states = [init] * n_paths
    elif callable(init):
        states = [init(i) for i in indices]
    else:
        states = list(init)
        if len(states) != n_paths:
            raise ValueError("need one initial state per path")
    _check_orthonormal(model, states)
    steps = None if save_steps is None else tuple(save_steps)
    _step_indices(n_steps, save_stride, steps)
    jobs = [_Job(model, A, B, tuple(states[i:i + chunk_size]), tuple(indices[i:i + chunk_size]), T, h,
                 StepScheme(scheme).value, policy, int(seed), int(save_stride), steps, int(fine_factor),
                 keep_noise)
            for i in range(0, n_paths, chunk_size)]
    if workers <= 1 or len(jobs) == 1:
        parts = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_job, jobs))
    return [rec for part in parts for rec in part]


def ensemble_map(fn: Callable[[TrajectoryRecord], object], records) -> list:
    """Apply ``fn`` in trajectory-index order."""
    return [fn(r) for r in sorted(records, key=lambda r: r.index)]


# -- output --------------------------------------------------------------------


def csv_header(d: int) -> list[str]:
    return (["t", "chart"] + [f"xi_{i}" for i in range(d)]
            + [f"zeta_{i}{j}" for i in range(d) for j in range(d)] + ["switched"])


def write_trajectory_csv(record: TrajectoryRecord, path) -> None:
    d = record.xi.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(d))
        for k in range(len(record.times)):
            row = [repr(float(record.times[k])), int(record.charts[k])]
            row += [repr(float(v)) for v in record.xi[k]]
            row += [repr(float(v)) for v in record.zeta[k].ravel()]
            row.append(int(bool(record.switched[k])))
            w.writerow(row)


def read_trajectory_csv(path) -> TrajectoryRecord:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = sum(1 for h in header if h.startswith("xi_"))
    data = np.array([[float(v) for v in r] for r in body])
    return TrajectoryRecord(times=data[:, 0], charts=data[:, 1].astype(np.int64), xi=data[:, 2:2 + d],
                            zeta=data[:, 2 + d:2 + d + d * d].reshape(-1, d, d),
                            switched=data[:, -1].astype(bool))


def raise_for_status(record: TrajectoryRecord) -> None:
    if record.status.endswith("FrameBlowup"):
        raise FrameBlowup(f"trajectory {record.index} aborted")
    if record.status.endswith("LeftAtlas"):
        raise LeftAtlas(f"trajectory {record.index} aborted")
