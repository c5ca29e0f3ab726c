"""Command-line driver: meshes, optimization runs, sweeps and checks."""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig, load_config, resolve_path
from .curves import SphericalCurve
from .mesh import MeshError, TriMesh, build_rwg, generate_plate, generate_sphere
from .operators import AssemblyError, FeedSpec, QuadratureOrder, build_operators
from .qfactor import FeedIsolatedError, SolverError, analyze, frequency_sweep
from .setups import Problem, plate_feed, sphere_feeds
from .topopt import OptimizationAborted, gradient_check, optimize

log = logging.getLogger("momtopo")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
GRADCHECK_MAX_T = 200


class UsageError(Exception):
    pass


def _threads(n):
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def build_problem(cfg: RunConfig) -> Problem:
    """Mesh, basis, feeds and pinned triangles described by a run config."""
    m = cfg.mesh
    if m.kind == "plate":
        mesh = generate_plate(m.L, m.aspect, m.nx, m.ny)
    elif m.kind == "sphere":
        mesh = generate_sphere(m.subdivisions, m.R)
    else:
        mesh = io.read_mesh(resolve_path(cfg, m.path))
    if cfg.feed.edges:
        feeds = FeedSpec(tuple(cfg.feed.edges), None if cfg.feed.voltages is None else tuple(cfg.feed.voltages))
    elif m.kind == "plate":
        feeds = plate_feed(mesh, m.L, m.nx)
    else:
        feeds = sphere_feeds(mesh, m.R, cfg.feed.phase_deg)
    basis = build_rwg(mesh)
    for e in feeds.edges:
        if not 0 <= e < len(basis.edge_basis) or basis.edge_basis[e] < 0:
            raise ConfigError(f"feed edge {e} is not an inner edge of the mesh")
    fixed = np.zeros(mesh.num_triangles, dtype=bool)
    fixed[feeds.triangles(mesh)] = True
    return Problem(m.kind, mesh, basis, feeds, fixed, fixed.astype(float))


def _quad(cfg: RunConfig) -> QuadratureOrder:
    return QuadratureOrder(cfg.solver.quad_far, cfg.solver.quad_near, radiation=cfg.solver.quad_radiation)


def _operators(cfg: RunConfig, problem: Problem, ka: float):
    cache = None if cfg.solver.cache_dir is None else resolve_path(cfg, cfg.solver.cache_dir)
    return build_operators(problem.mesh, problem.basis, ka / problem.mesh.a, problem.feeds,
                           _quad(cfg), cfg.solver.fd_step, cache_dir=cache)


def _counts(mesh: TriMesh) -> str:
    N = build_rwg(mesh).N
    return f"T={mesh.num_triangles} N={N} b={mesh.num_boundary_edges} a={mesh.a:.12g}"


def cmd_mesh(args) -> int:
    if args.shape == "plate":
        mesh = generate_plate(args.L, args.aspect, args.nx, args.ny)
    else:
        mesh = generate_sphere(args.subdiv, args.R)
    if args.output:
        io.write_mesh(args.output, mesh)
    print(_counts(mesh))
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    opt = cfg.optimization
    if opt.init == "file":
        opt.init_design = io.read_design(resolve_path(cfg, opt.init_file))
    out = resolve_path(cfg, cfg.output.dir)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    io.write_mesh(out / "mesh.ntm", problem.mesh)
    with _threads(cfg.threads):
        ops = _operators(cfg, problem, opt.ka)
        with open(out / "log.csv", "w", newline="") as fh:
            clog = io.ConvergenceLog(fh)
            snap = lambda i, rb: io.write_design(out / "snapshots" / f"iter_{i:04d}.ntd", rb)
            try:
                res = optimize(opt, problem, ops, on_iteration=clog.write, on_snapshot=snap)
            except OptimizationAborted as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_NUMERIC
    io.write_design(out / "design.ntd", res.design.rho_bar)
    io.write_design(out / "design_thr.ntd", res.binary)
    summary = {
        "termination": res.termination,
        "iterations": len(res.records),
        "Qe": res.final.Qe, "Qm": res.final.Qm, "Q": res.final.Q,
        "self_resonance": res.self_resonance,
        "self_resonant": bool(res.self_resonance <= 0.05),
        "area_fraction": res.final.area_frac,
        "ka3_Q": opt.ka ** 3 * res.final.Q,
        "thr_Q": None if res.threshold is None else res.threshold.Q,
        "thr_Qe": None if res.threshold is None else res.threshold.Qe,
        "thr_Qm": None if res.threshold is None else res.threshold.Qm,
        "thr_error": res.threshold_error,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for key in ("termination", "iterations", "Q", "Qe", "Qm", "self_resonant", "area_fraction", "thr_Q",
                "thr_error"):
        print(f"{key}: {summary[key]}")
    return EXIT_OK


def _design_rows(args, ka_list):
    cfg = load_config(args.config)
    problem = build_problem(cfg)
    design = io.read_design(args.design)
    if len(design) != problem.mesh.num_triangles:
        raise UsageError(f"design has {len(design)} values but the mesh has {problem.mesh.num_triangles} triangles")
    opt = cfg.optimization
    with _threads(cfg.threads):
        return frequency_sweep(design, ka_list, problem.mesh, problem.feeds, problem.basis,
                               args.thresholded, opt.interpolation, _quad(cfg))


def _emit(text: str, output) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_sweep(args) -> int:
    if not args.ka:
        raise UsageError("empty ka list")
    rows = _design_rows(args, args.ka)
    _emit(io.format_sweep(rows), args.output)
    return EXIT_NUMERIC if all(r.error for r in rows) else EXIT_OK


def cmd_analyze(args) -> int:
    rows = _design_rows(args, [args.ka])
    _emit(io.format_sweep(rows), args.output)
    return EXIT_NUMERIC if rows[0].error else EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = load_config(args.config)
    problem = build_problem(cfg)
    T = problem.mesh.num_triangles
    if T > GRADCHECK_MAX_T:
        raise UsageError(f"gradcheck is limited to meshes with at most {GRADCHECK_MAX_T} triangles (got {T})")
    opt = cfg.optimization
    rho = None
    if args.random_seed is not None:
        rho = np.random.default_rng(args.random_seed).uniform(0.1, 0.9, T)
    with _threads(cfg.threads):
        ops = _operators(cfg, problem, opt.ka)
        chk = gradient_check(problem, ops, opt, rho=rho, h=args.h, beta=args.beta)
    print(f"max relative error {chk.max_rel_error:.3e} ({chk.worst_quantity}, triangle {chk.worst_triangle})")
    if chk.passed(args.tol):
        return EXIT_OK
    print(f"gradient check failed: tolerance {args.tol:g} exceeded at triangle {chk.worst_triangle}",
          file=sys.stderr)
    return EXIT_NUMERIC


def cmd_curves(args) -> int:
    if args.kind == "helix":
        curve = SphericalCurve("helix", args.M, args.R, args.samples, arms=args.arms)
    else:
        curve = SphericalCurve("loxodrome", args.gamma, args.R, args.samples, t_max=args.tmax, arms=args.arms)
    io.write_polyline(args.output, curve)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="momtopo", description="Q-factor topology optimization on MoM meshes.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = ap.add_subparsers(dest="command", required=True)

    mp = sub.add_parser("mesh", help="generate a plate or sphere mesh")
    msub = mp.add_subparsers(dest="shape", required=True)
    pl = msub.add_parser("plate")
    pl.add_argument("--L", type=float, default=1.0)
    pl.add_argument("--aspect", type=float, default=0.6)
    pl.add_argument("--nx", type=int, required=True)
    pl.add_argument("--ny", type=int, required=True)
    pl.add_argument("-o", "--output")
    sp = msub.add_parser("sphere")
    sp.add_argument("--subdiv", type=int, required=True)
    sp.add_argument("--R", type=float, default=1.0)
    sp.add_argument("-o", "--output")
    mp.set_defaults(func=cmd_mesh)

    op = sub.add_parser("optimize", help="run the optimization described by a config file")
    op.add_argument("config")
    op.set_defaults(func=cmd_optimize)

    for name, func, helptext in (("sweep", cmd_sweep, "Q of a fixed design over several ka"),
                                 ("analyze", cmd_analyze, "Q of a fixed design at one ka")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="config describing mesh, feeds and material")
        p.add_argument("design", help="design file (ntdesign)")
        if name == "sweep":
            p.add_argument("--ka", type=float, nargs="+", required=True)
        else:
            p.add_argument("--ka", type=float, required=True)
        p.add_argument("--thresholded", action="store_true", help="analyse the PEC design on the reduced basis")
        p.add_argument("-o", "--output")
        p.set_defaults(func=func)

    gp = sub.add_parser("gradcheck", help="adjoint gradients against finite differences")
    gp.add_argument("config")
    gp.add_argument("--h", type=float, default=1e-5)
    gp.add_argument("--tol", type=float, default=1e-4)
    gp.add_argument("--beta", type=float, default=None)
    gp.add_argument("--random-seed", type=int, default=None, help="check at a random interior design")
    gp.set_defaults(func=cmd_gradcheck)

    cp = sub.add_parser("curves", help="sample a spherical helix or loxodrome")
    csub = cp.add_subparsers(dest="kind", required=True)
    hx = csub.add_parser("helix")
    hx.add_argument("--M", type=float, required=True)
    lx = csub.add_parser("loxodrome")
    lx.add_argument("--gamma", type=float, required=True)
    lx.add_argument("--tmax", type=float, default=3 * np.pi)
    for p in (hx, lx):
        p.add_argument("--R", type=float, default=1.0)
        p.add_argument("--samples", type=int, default=201)
        p.add_argument("--arms", type=int, choices=(1, 2), default=1)
        p.add_argument("-o", "--output", required=True)
    cp.set_defaults(func=cmd_curves)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, MeshError, io.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, AssemblyError, FeedIsolatedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
