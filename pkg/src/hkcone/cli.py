"""Command-line front end: ``hk <command> ...``.

Exit codes: 0 success, 1 failed experiment check, 2 usage error, 3 I/O or
input-format error, 4 solver or geometry error. Machine-readable results go to
stdout and diagnostics to stderr; ``HK_LOG`` selects error, info or debug.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import HKError
from .let_solver import SolverConfig, solve_let

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO, EXIT_SOLVER = 0, 1, 2, 3, 4

log = logging.getLogger("hkcone")


class InputError(Exception):
    """Unreadable or malformed input file."""


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _unit_float(text):
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a number in [0, 1], got {text}")
    return value


def _triple(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated numbers")
    return tuple(parts)


def _load(loader, path):
    try:
        return loader(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _solver_flags(p):
    g = p.add_argument_group("solver")
    g.add_argument("--epsilon-start", type=_positive_float, default=0.1,
                   help="initial entropic regularization (default 0.1)")
    g.add_argument("--epsilon-min", type=_positive_float, default=1e-3,
                   help="final entropic regularization (default 1e-3)")
    g.add_argument("--tol", type=_positive_float, default=1e-9,
                   help="Sinkhorn potential change tolerance (default 1e-9)")
    g.add_argument("--max-iters", type=_positive_int, default=10000,
                   help="Sinkhorn iterations per annealing stage (default 10000)")
    g.add_argument("--threads", type=_positive_int, default=1,
                   help="BLAS/OpenMP threads; results are bit-exact only with 1 (default 1)")


def _cfg(args) -> SolverConfig:
    return SolverConfig(epsilon_start=args.epsilon_start, epsilon_min=args.epsilon_min,
                        tol=args.tol, max_iters=args.max_iters)


def _emit_csv_or_stdout(save, out, obj):
    save(sys.stdout if out is None else out, obj)


# ------------------------------------------------------------------ commands

def cmd_dist(args):
    from .measures import load_measure_csv
    mu0 = _load(load_measure_csv, args.source)
    mu1 = _load(load_measure_csv, args.target)
    sol = solve_let(mu0, mu1, _cfg(args))
    print(repr(sol.hk_distance))
    return EXIT_OK


def cmd_interpolate(args):
    from .lifting import hk_interpolate
    from .measures import load_measure_csv, save_cone_csv, save_measure_csv
    mu0 = _load(load_measure_csv, args.source)
    mu1 = _load(load_measure_csv, args.target)
    sol = solve_let(mu0, mu1, _cfg(args))
    mu_t, lam_t = hk_interpolate(mu0, mu1, sol, args.t)
    if args.cone_out:
        save_cone_csv(args.cone_out, lam_t)
    _emit_csv_or_stdout(save_measure_csv, args.out, mu_t)
    return EXIT_OK


def _save_cone_field(path, V):
    from .measures import _header, _write_table
    lam = V.anchored_on
    header = _header("x", lam.dim) + ["r", "mass"] + _header("a", lam.dim) + ["b"]
    _write_table(path, header, np.column_stack([lam.points, lam.radii, lam.masses, V.a, V.b]))


def cmd_lift(args):
    from .lifting import isometric_lift
    from .measures import load_measure_csv, save_cone_csv, save_measure_csv
    mu0 = _load(load_measure_csv, args.source)
    mu1 = _load(load_measure_csv, args.target)
    path = isometric_lift(mu0, mu1, args.n_steps, _cfg(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(path.n_steps + 1):
        save_measure_csv(out / f"base_{k:03d}.csv", path.base_measures[k])
        save_cone_csv(out / f"cone_{k:03d}.csv", path.measures[k])
        if k < path.n_steps:
            _save_cone_field(out / f"tangent_{k:03d}.csv", path.tangents[k])
    print(json.dumps({"n_steps": path.n_steps, "out": str(out),
                      "deterministic_radial": all(m.deterministic_radial() for m in path.measures)}))
    return EXIT_OK


def cmd_log(args):
    from .hk_maps import hk_log, save_tangent_csv
    from .measures import load_measure_csv
    mu0 = _load(load_measure_csv, args.source)
    mu1 = _load(load_measure_csv, args.target)
    sol = solve_let(mu0, mu1, _cfg(args))
    u = hk_log(mu0, mu1, sol, args.dt, edgewise=not args.barycentric)
    _emit_csv_or_stdout(save_tangent_csv, args.out, u)
    return EXIT_OK


def cmd_exp(args):
    from .hk_maps import hk_exp, load_tangent_csv
    from .measures import save_measure_csv
    u = _load(load_tangent_csv, args.tangent)
    mu_t, dropped = hk_exp(u.anchored_on, u, args.t, return_dropped=True)
    if dropped:
        log.info("dropped %d atoms with vanishing amplitude", dropped)
    _emit_csv_or_stdout(save_measure_csv, args.out, mu_t)
    return EXIT_OK


def cmd_pt(args):
    from .hk_maps import hk_norm, load_tangent_csv, save_tangent_csv
    from .measures import load_measure_csv
    from .transport import hk_parallel_transport
    mu0 = _load(load_measure_csv, args.source)
    mu1 = _load(load_measure_csv, args.target)
    u = _load(load_tangent_csv, args.tangent_file)
    if len(u.anchored_on) != len(mu0) or not np.allclose(u.anchored_on.points, mu0.points):
        raise InputError(f"{args.tangent_file}: tangent is not anchored on {args.source}")
    u = type(u)(mu0, u.v, u.beta)
    res = hk_parallel_transport(mu0, mu1, u, args.n_steps, _cfg(args))
    save_tangent_csv(args.out, res.transported)
    print(json.dumps({"n_steps": res.n_steps, "per_step_norms": res.per_step_norms,
                      "input_norm": hk_norm(u), "output_norm": hk_norm(res.transported)}))
    return EXIT_OK


def cmd_cone_pt(args):
    from .experiments import cone_pt_trajectory
    from .measures import _write_table
    table = cone_pt_trajectory(args.samples)[0][:, :5]

    def save(path, data):
        _write_table(path, ["t", "x", "r", "a", "b"], data)
    _emit_csv_or_stdout(save, args.out, table)
    return EXIT_OK


def cmd_experiment(args):
    from . import experiments as ex
    cfg = _cfg(args)
    out = Path(args.out) if args.out else None
    name = args.name
    if name == "mass-growth":
        report = ex.exp_mass_growth(args.seed, args.M1, args.M2, args.M3, args.variance,
                                    args.n_steps, cfg, out)
    elif name == "mean-shift":
        report = ex.exp_mean_shift(args.seed, args.n, args.means or (-1.0, 0.0, 1.0),
                                   args.variance, args.n_steps, cfg, out)
    elif name == "cov-change":
        report = ex.exp_cov_change(args.seed, args.n, args.variances or (1.0, 1.0, 2.0),
                                   args.n_steps, cfg, out)
    elif name == "interpolation":
        report = ex.exp_interpolation(args.seed, args.n0, args.n1, args.n_steps,
                                      variance=args.variance, cfg=cfg, out=out)
    else:
        report = ex.exp_cone_pt_figure(out=out)
    if out is not None:
        report.write(out)
    print(report.to_json())
    return EXIT_OK if report.passed else EXIT_CHECK


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hk", description=(
        "Hellinger-Kantorovich distances, geodesics, cone lifts and parallel transport "
        "on weighted point clouds. Clouds are CSV files with header x1..xd,mass."))
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("dist", help="print the HK distance between two clouds")
    p.add_argument("source")
    p.add_argument("target")
    _solver_flags(p)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("interpolate", help="point at time t on the HK geodesic")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--t", type=_unit_float, default=0.5, help="time in [0, 1] (default 0.5)")
    p.add_argument("--out", help="output cloud CSV (default stdout)")
    p.add_argument("--cone-out", help="also write the lifted cone cloud x1..xd,r,mass")
    _solver_flags(p)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("lift", help="isometric cone lift of the discretized geodesic")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--n-steps", type=_positive_int, default=32, help="grid steps (default 32)")
    p.add_argument("--out", required=True, help="output directory for per-step CSVs")
    _solver_flags(p)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("log", help="HK logarithm: tangent at source pointing to target")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--dt", type=_positive_float, default=1.0, help="time step divisor (default 1)")
    p.add_argument("--barycentric", action="store_true",
                   help="use the barycentric target instead of edgewise averaging")
    p.add_argument("--out", help="output tangent CSV x1..xd,mass,v1..vd,beta (default stdout)")
    _solver_flags(p)
    p.set_defaults(func=cmd_log)

    p = sub.add_parser("exp", help="HK exponential of a tangent CSV")
    p.add_argument("tangent", help="tangent CSV x1..xd,mass,v1..vd,beta")
    p.add_argument("--t", type=float, default=1.0, help="time, >= 0 (default 1)")
    p.add_argument("--out", help="output cloud CSV (default stdout)")
    p.set_defaults(func=cmd_exp)

    p = sub.add_parser("pt", help="parallel transport of a tangent along the HK geodesic")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--tangent-file", required=True, help="tangent CSV anchored on source")
    p.add_argument("--n-steps", type=_positive_int, default=32, help="transport steps (default 32)")
    p.add_argument("--out", required=True, help="output tangent CSV anchored on target")
    _solver_flags(p)
    p.set_defaults(func=cmd_pt)

    p = sub.add_parser("cone-pt", help="trajectory of 0.75 d/dr transported from (1, 0.5) to (3, 1)")
    p.add_argument("--samples", type=_positive_int, default=100, help="sample times (default 100)")
    p.add_argument("--out", help="output CSV t,x,r,a,b (default stdout)")
    p.set_defaults(func=cmd_cone_pt)

    p = sub.add_parser("experiment", help="run a seeded simulation and print its JSON report")
    p.add_argument("name", choices=["mass-growth", "mean-shift", "cov-change",
                                    "interpolation", "cone-pt"])
    p.add_argument("--seed", type=int, default=0, help="PRNG seed (default 0)")
    p.add_argument("--out", help="directory for the JSON report and CSV artifacts")
    p.add_argument("--n-steps", type=_positive_int, default=32, help="transport steps (default 32)")
    p.add_argument("--M1", type=_positive_int, default=2000, help="mass-growth: atoms in mu1")
    p.add_argument("--M2", type=_positive_int, default=1000, help="mass-growth: atoms in mu2")
    p.add_argument("--M3", type=_positive_int, default=500, help="mass-growth: atoms in mu3")
    p.add_argument("--variance", type=_positive_float, default=None,
                   help="sampling variance (default 2 for mass-growth, 1 otherwise)")
    p.add_argument("--n", type=_positive_int, default=1000, help="atoms per cloud (mean-shift, cov-change)")
    p.add_argument("--means", type=_triple, help="mean-shift: three comma-separated means")
    p.add_argument("--variances", type=_triple, help="cov-change: three comma-separated variances")
    p.add_argument("--n0", type=_positive_int, default=1000, help="interpolation: source atoms")
    p.add_argument("--n1", type=_positive_int, default=2000, help="interpolation: target atoms")
    _solver_flags(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def _configure_logging():
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("HK_LOG", "error").lower(), logging.ERROR)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def run(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if getattr(args, "command", None) == "experiment" and args.variance is None:
        args.variance = 2.0 if args.name == "mass-growth" else 1.0
    try:
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=args.threads if hasattr(args, "threads") else 1):
            return args.func(args)
    except InputError as exc:
        print(f"hk: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"hk: {exc}", file=sys.stderr)
        return EXIT_IO
    except (HKError, ArithmeticError) as exc:
        print(f"hk: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
