"""Command-line front end.

    framesde geometry-report --config run.json [--out DIR] [--seed N]
    framesde simulate        --config run.json [--out DIR] [--seed N] [--workers N]
    framesde verify SUITE    --config run.json [--out DIR] [--seed N] [--workers N]

Exit codes: 0 success or all checks pass, 1 a verification failure,
2 a configuration error, 3 an IO error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import SUITES, RunConfig, check_suite, load_config
from .errors import ConfigError
from .fields import IdentityTensor, ZeroVector
from .geometry import (Sphere, bounded_geometry_report, christoffel_transformation_residual, curvature_report,
                       verify_uniform_atlas)
from .geometry.models import ChartPoint, EUCLIDEAN, SPHERE, HYPERBOLIC
from .integrator import STATUS, ensemble, write_trajectory_csv
from .report import VerificationReport
from .verify import (ambient_linear, eigenfunction_decay_check, exit_probability_study, find_overlap_state,
                     flow_moment_study, frame_refinement_study, generator_residual, holonomy_check,
                     ito_strat_fd_check, laplacian_comparison_check, overlap_partner, squared_distance_flat,
                     transition_consistency_check, weak_scheme_agreement)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

FLOW_BANDS = {EUCLIDEAN: (0.97, 1.03), SPHERE: (0.85, 1.15), HYPERBOLIC: (0.85, 1.15)}
EIGEN_TIMES = (0.25, 0.5, 1.0)
GENERATOR_T = 0.01
TRANSITION_RESIDUAL_TOL = 1e-6


class _Context:
    """Objects built once from a validated config."""

    def __init__(self, config: RunConfig, workers: int):
        self.config = config
        self.model = config.build_model()
        self.A = config.build_a(self.model)
        self.B = config.build_b(self.model)
        self.policy = config.build_policy()
        self.init = config.build_init(self.model)
        self.seed = config.seed
        self.workers = workers
        sim = config.sim
        self.T, self.h, self.n_paths, self.scheme = sim.T, sim.h, sim.n_paths, sim.scheme

    @property
    def x0(self) -> ChartPoint:
        return ChartPoint(self.init.chart, self.init.xi)

    @property
    def brownian(self) -> bool:
        return isinstance(self.A, IdentityTensor) and isinstance(self.B, ZeroVector)


# -- suites ----------------------------------------------------------------------


def suite_invariants(ctx: _Context) -> VerificationReport:
    rep = VerificationReport()
    rep.extend(frame_refinement_study(ctx.model, ctx.A, ctx.B, ctx.init, ctx.T, ctx.h, seed=ctx.seed,
                                      scheme=ctx.scheme, policy=ctx.policy))
    rep.extend(ito_strat_fd_check(ctx.model, ctx.A, ctx.B, seed=ctx.seed))
    rep.extend(curvature_report(ctx.model, seed=ctx.seed))
    if isinstance(ctx.model, Sphere) and ctx.model.d == 2:
        rep.extend(holonomy_check(ctx.model))
    return rep


def suite_generator(ctx: _Context) -> VerificationReport:
    rep = VerificationReport()
    P0 = ctx.model.embed(np.array([ctx.init.chart]), ctx.init.xi[None])[0]
    phi = squared_distance_flat(P0) if ctx.model.kind == EUCLIDEAN else ambient_linear(P0)
    T_gen = min(ctx.T, GENERATOR_T)
    h_gen = min(ctx.h, T_gen / 10.0)
    rep.extend(generator_residual(ctx.model, ctx.A, ctx.B, ctx.x0, phi, T_gen, h_gen, ctx.n_paths,
                                  seed=ctx.seed, scheme=ctx.scheme, workers=ctx.workers))
    rep.extend(weak_scheme_agreement(ctx.model, ctx.A, ctx.B, ctx.x0, phi, ctx.T, ctx.h, ctx.n_paths,
                                     seed=ctx.seed, workers=ctx.workers))
    times = tuple(t for t in EIGEN_TIMES if t <= ctx.T + 1e-12)
    if isinstance(ctx.model, Sphere) and ctx.brownian and times:
        rep.extend(eigenfunction_decay_check(ctx.model, times, n_paths=ctx.n_paths, h=ctx.h, seed=ctx.seed,
                                             scheme=ctx.scheme, x0=ctx.x0, workers=ctx.workers))
    return rep


def suite_flow(ctx: _Context) -> VerificationReport:
    A = None if isinstance(ctx.A, IdentityTensor) else ctx.A
    study = flow_moment_study(ctx.model, ctx.B, ctx.x0, n_paths=ctx.n_paths, seed=ctx.seed, A=A,
                              workers=ctx.workers)
    band = FLOW_BANDS.get(ctx.model.kind) if A is None and isinstance(ctx.B, ZeroVector) else None
    return study.report({2.0: band} if band else None, repr(ctx.model))


def suite_exit(ctx: _Context) -> VerificationReport:
    try:
        return exit_probability_study(ctx.model, ctx.A, ctx.B, ctx.init.chart, ctx.init.xi,
                                      n_paths=ctx.n_paths, seed=ctx.seed)
    except ValueError as exc:
        raise ConfigError(f"exit suite: {exc}") from None


def suite_laplacian(ctx: _Context) -> VerificationReport:
    return laplacian_comparison_check(ctx.model, seed=ctx.seed)


def suite_transition(ctx: _Context) -> VerificationReport:
    rep = VerificationReport()
    residual = christoffel_transformation_residual(ctx.model, seed=ctx.seed)
    rep.add("transition.christoffel_identity", residual, target=TRANSITION_RESIDUAL_TOL, rule="le")
    init, partner = ctx.init, overlap_partner(ctx.model, ctx.init)
    if partner is None:
        init, partner = find_overlap_state(ctx.model, seed=ctx.seed)
    rep.extend(transition_consistency_check(ctx.model, ctx.A, ctx.B, init, partner, seed=ctx.seed))
    return rep


SUITE_FUNCS = {
    "invariants": suite_invariants,
    "generator": suite_generator,
    "flow": suite_flow,
    "exit": suite_exit,
    "laplacian": suite_laplacian,
    "transition": suite_transition,
}


def run_suite(ctx: _Context, suite: str) -> VerificationReport:
    names = [s for s in SUITES if s != "all"] if suite == "all" else [suite]
    rep = VerificationReport(meta={"suites": names, "model": repr(ctx.model), "seed": ctx.seed})
    for name in names:
        rep.extend(SUITE_FUNCS[name](ctx))
    return rep


# -- commands --------------------------------------------------------------------


def geometry_report(ctx: _Context) -> VerificationReport:
    rep = VerificationReport(meta={"model": repr(ctx.model), "seed": ctx.seed})
    rep.extend(verify_uniform_atlas(ctx.model, seed=ctx.seed))
    rep.extend(bounded_geometry_report(ctx.model, seed=ctx.seed))
    rep.extend(curvature_report(ctx.model, seed=ctx.seed))
    return rep


def simulate_to(ctx: _Context, out: Path) -> dict:
    sim = ctx.config.sim
    recs = ensemble(ctx.model, ctx.A, ctx.B, ctx.init, sim.T, sim.h, sim.scheme, ctx.policy,
                    n_paths=sim.n_paths, seed=ctx.seed, workers=ctx.workers, save_stride=sim.save_stride)
    tdir = out / "trajectories"
    tdir.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(sim.n_paths - 1)))
    summary = []
    for rec in recs:
        name = f"traj_{rec.index:0{width}d}.csv"
        write_trajectory_csv(rec, tdir / name)
        summary.append({"index": rec.index, "file": f"trajectories/{name}", "status": rec.status,
                        "n_switches": len(rec.switches), "final_chart": int(rec.charts[-1])})
    counts = {s: sum(1 for r in recs if r.status == s) for s in STATUS.values()}
    return {"trajectories": summary, "status_counts": counts}


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _run_meta(config: RunConfig, command: str, workers: int) -> dict:
    return {
        "command": command,
        "config": config.model_dump(mode="json"),
        "seed": config.seed,
        "workers": workers,
        "versions": {"framesde": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="framesde", description="Frame-bundle SDEs on manifolds via charts.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="seed (overrides the config seed)")
        p.add_argument("--workers", type=int, help="process count (overrides sim.workers)")

    common(sub.add_parser("geometry-report", help="atlas, bounded-geometry and curvature checks"))
    common(sub.add_parser("simulate", help="simulate trajectories and write CSV files"))
    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=SUITES)
    common(v)
    return parser


def _prepare(args) -> tuple[RunConfig, Path, int]:
    config = load_config(args.config)
    updates = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        updates["seed"] = args.seed
    if args.out is not None:
        updates["output_dir"] = args.out
    if updates:
        config = config.model_copy(update=updates)
    workers = config.sim.workers if args.workers is None else args.workers
    if workers < 1:
        raise ConfigError("--workers must be >= 1")
    return config, Path(config.output_dir), workers


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, out, workers = _prepare(args)
        if args.command == "verify":
            check_suite(config, args.suite)
        ctx = _Context(config, workers)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "run_meta.json", _run_meta(config, args.command, workers))
        if args.command == "geometry-report":
            rep = geometry_report(ctx)
            (out / "geometry_report.json").write_text(rep.to_json() + "\n")
            code = EXIT_OK if rep.passed else EXIT_FAIL
        elif args.command == "simulate":
            _write_json(out / "summary.json", simulate_to(ctx, out))
            code = EXIT_OK
        else:
            rep = run_suite(ctx, args.suite)
            (out / "verify_report.json").write_text(rep.to_json() + "\n")
            code = EXIT_OK if rep.passed else EXIT_FAIL
        if args.command != "simulate":
            print(rep.summary())
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
