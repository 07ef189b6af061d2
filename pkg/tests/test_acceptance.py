"""Acceptance criteria. Each test prints one PASS/FAIL line before asserting."""

import json
import math

import numpy as np
import pytest

from framesde.chart_sde import orthonormal_frame_at
from framesde.cli import main
from framesde.fields import IdentityTensor, ZeroVector
from framesde.geometry import ChartPoint, christoffel_transformation_residual, curvature_report, make_model
from framesde.integrator import NoiseSource, StepScheme, simulate
from framesde.report import VerificationReport
from framesde.verify import (ambient_linear, eigenfunction_decay_check, exit_probability_study, find_overlap_state,
                             flow_moment_study, frame_refinement_study, holonomy_check, ito_strat_fd_check,
                             laplacian_comparison_check, transition_consistency_check, weak_scheme_agreement)

KINDS = ["euclidean", "sphere", "hyperbolic", "torus"]


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'} {title} {detail}".rstrip())
        assert ok, f"criterion {number} ({title}) failed: {detail}"
    return emit


def _lines(rep: VerificationReport) -> str:
    return "; ".join(f"{e.name}={e.value:.4g}" if isinstance(e.value, float) else f"{e.name}={e.value}"
                     for e in rep.entries)


def test_01_flat_reduction(verdict):
    E = make_model("euclidean")
    init = orthonormal_frame_at(E, ChartPoint(0, [0.0, 0.0]))
    worst, frozen, switched = 0.0, True, 0
    for seed in (0, 1, 2):
        rec = simulate(E, IdentityTensor(), ZeroVector(), init, 2.0, 1e-3, noise=NoiseSource(seed, 0))
        W = np.vstack([np.zeros(2), np.cumsum(rec.increments, axis=0)])
        P = E.embed(rec.charts, rec.xi)
        worst = max(worst, float(np.max(np.abs(P - P[0] - W))))
        frozen &= bool(np.all(rec.zeta == init.zeta))
        switched += len(rec.switches)
    verdict(1, "flat reduction", worst <= 1e-12 and frozen,
            f"max |X - X0 - W| = {worst:.2e}, zeta constant = {frozen}, chart changes = {switched}")


def test_02_frame_conservation(verdict):
    S = make_model("sphere")
    init = orthonormal_frame_at(S, ChartPoint(0, [0.0, 0.0]))
    rep = frame_refinement_study(S, IdentityTensor(), ZeroVector(), init, 1.0, 1e-3, n_seeds=20)
    verdict(2, "frame conservation", rep.passed, _lines(rep))


def test_03_eigenfunction_decay(verdict):
    rep = eigenfunction_decay_check(make_model("sphere"), (0.25, 0.5, 1.0), n_paths=10_000, h=1e-3)
    verdict(3, "eigenfunction decay", rep.passed, _lines(rep))


def test_04_flow_moment_scaling(verdict):
    bands = {"euclidean": (0.97, 1.03), "sphere": (0.85, 1.15), "hyperbolic": (0.85, 1.15)}
    rep = VerificationReport()
    for kind, band in bands.items():
        study = flow_moment_study(make_model(kind), n_paths=10_000, dt_grid=list(np.geomspace(1e-3, 1e-1, 7)))
        sub = study.report({2.0: band}, kind)
        sub.entries[0].name = f"{kind}.slope"
        rep.extend(sub)
    verdict(4, "flow-moment scaling", rep.passed, _lines(rep))


def test_05_exit_bound(verdict):
    rep = VerificationReport()
    for kind in ("euclidean", "sphere"):
        sub = exit_probability_study(make_model(kind), IdentityTensor(), ZeroVector(), 0, [0.0, 0.0],
                                     n_paths=10_000)
        for e in sub.entries:
            e.name = f"{kind}.{e.name}"
        rep.extend(sub)
    verdict(5, "exit bound", rep.passed, _lines(rep))


def test_06_laplacian_comparison(verdict):
    rep = VerificationReport()
    for kind in ("sphere", "hyperbolic", "euclidean"):
        m = make_model(kind)
        sub = laplacian_comparison_check(m, r_grid=list(np.linspace(0.1, 1.5, 8)),
                                         exact_tol=1e-6 if kind == "euclidean" else 1e-3)
        for e in sub.entries:
            e.name = f"{kind}.{e.name}"
        rep.extend(sub)
    verdict(6, "Laplacian comparison", rep.passed, _lines(rep))


def test_07_curvature_oracles(verdict):
    rep = VerificationReport()
    for kind in KINDS:
        sub = curvature_report(make_model(kind), n_samples=200, sectional_tol=1e-6, identity_tol=1e-8)
        for e in sub.entries:
            e.name = f"{kind}.{e.name}"
        rep.extend(sub)
    verdict(7, "curvature oracles", rep.passed, _lines(rep))


def test_08_holonomy(verdict):
    rep = holonomy_check(make_model("sphere"), colatitude=math.pi / 3, tol=1e-3)
    e = rep["holonomy.angle_error"]
    ok = rep.passed and e.details["expected"] == pytest.approx(math.pi)
    verdict(8, "holonomy", ok, f"angle = {e.details['angle']:.6f}, error = {e.value:.2e}")


def test_09_chart_change_coherence(verdict):
    rep = VerificationReport()
    for kind in KINDS:
        residual = christoffel_transformation_residual(make_model(kind), n_samples=50)
        rep.add(f"{kind}.christoffel_identity", residual, target=1e-6, rule="le")
    for kind in ("sphere", "hyperbolic"):
        m = make_model(kind)
        state, partner = find_overlap_state(m, seed=0)
        sub = transition_consistency_check(m, IdentityTensor(), ZeroVector(), state, partner, n_seeds=20)
        for e in sub.entries:
            e.name = f"{kind}.{e.name}"
        rep.extend(sub)
    verdict(9, "chart-change coherence", rep.passed, _lines(rep))


def test_10_ito_stratonovich_consistency(verdict):
    rep = VerificationReport()
    for kind in KINDS:
        sub = ito_strat_fd_check(make_model(kind), IdentityTensor(), ZeroVector(), n_states=100, tol=1e-6)
        for e in sub.entries:
            e.name = f"{kind}.{e.name}"
        rep.extend(sub)
    S = make_model("sphere")
    x0 = ChartPoint(0, [0.0, 0.0])
    P0 = S.embed(np.array([0]), x0.x[None])[0]
    rep.extend(weak_scheme_agreement(S, IdentityTensor(), ZeroVector(), x0, ambient_linear(P0), 0.5, 1e-3,
                                     10_000))
    verdict(10, "Ito-Stratonovich consistency", rep.passed, _lines(rep))


def test_11_determinism(verdict, tmp_path):
    cfg = {"model": {"kind": "sphere", "d": 2, "r": 0.9},
           "sim": {"T": 0.2, "h": 0.002, "n_paths": 600, "save_stride": 10, "scheme": StepScheme.STRAT_HEUN.value},
           "seed": 12345}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for w in (1, 2):
        out = tmp_path / f"w{w}"
        codes = [main(["simulate", "--config", str(path), "--out", str(out), "--workers", str(w)]),
                 main(["verify", "generator", "--config", str(path), "--out", str(out), "--workers", str(w)])]
        assert codes[0] == 0
        outs.append(out)
    names = sorted(p.relative_to(outs[0]).as_posix() for p in outs[0].rglob("*")
                   if p.is_file() and p.name != "run_meta.json")
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    verdict(11, "determinism", same and len(names) == 602, f"{len(names)} files compared across 1 and 2 workers")
