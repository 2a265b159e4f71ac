"""Command-line surface: gen | train | solve | spectral | bench.

Exit codes: 0 success, 2 validation failure (bad inputs, invariant
violations, uncertified models), 3 non-convergence.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench as bench_mod
from .geometry import GeometrySpec, generate
from .grid import FileFormatError, load_problem, residual_norms, save_field, save_problem
from .iterators import (
    Iterator,
    JacobiIterator,
    MultigridConfig,
    MultigridIterator,
    ground_truth,
    reset_start,
    solve_to_tol,
)
from .model import PhiIterator, load_model, parse_arch, save_model
from .spectral import DENSE_MAX_N, certify, linear_part, spectral_norm, spectral_radius
from .training import default_config, train, write_log

SOLVER_NAMES = ("jacobi", "mg2", "mg3", "conv1", "conv2", "conv3", "conv4",
                "unet2", "unet3")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NO_CONVERGENCE = 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _build_solver(name: str, model_path) -> Iterator:
    if name == "jacobi":
        return JacobiIterator()
    if name in ("mg2", "mg3"):
        return MultigridIterator(MultigridConfig(depth=int(name[2:])))
    if name in SOLVER_NAMES:
        if model_path is None:
            raise CliError(f"solver {name!r} needs --model with trained weights")
        model = load_model(model_path)
        kind, depth = parse_arch(name)
        if (model.arch, model.depth) != (kind, depth):
            raise CliError(
                f"model file holds {model.arch}{model.depth}, but --solver says {name}"
            )
        return PhiIterator(JacobiIterator(), model, name=name)
    raise CliError(f"unknown solver {name!r}")


def _geometry_kind(kind: str) -> str:
    return {"poisson": "square_poisson"}.get(kind, kind)


def cmd_gen(args) -> int:
    spec = GeometrySpec(kind=_geometry_kind(args.kind), n=args.n, seed=args.seed)
    p = generate(spec)
    save_problem(p, args.out)
    print(f"wrote {spec.kind} problem (n = {p.n}) to {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    p = load_problem(args.problem)
    it = _build_solver(args.solver, args.model)
    rng = np.random.default_rng(args.seed)
    u0 = np.where(p.mask == 1, rng.standard_normal((p.n, p.n)), p.b)
    u, report = solve_to_tol(it, p, u0, args.tol, args.max_steps)
    print("iterations,conv_layers,mul_adds,final_relative_error,converged")
    print(f"{report.iterations},{report.conv_layers},{report.mul_adds},"
          f"{report.final_relative_error:.6g},{int(report.converged)}")
    if args.out:
        save_field(u, args.out)
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def cmd_spectral(args) -> int:
    kind = _geometry_kind(args.kind)
    p = generate(GeometrySpec(kind=kind, n=args.n, seed=args.seed))
    it = _build_solver(args.solver, args.model)
    mode = args.mode or ("dense" if args.n <= DENSE_MAX_N else "power")
    lp = linear_part(it, p)
    rho = spectral_radius(lp, args.n, mode=mode)
    norm = spectral_norm(lp, args.n) if args.n <= DENSE_MAX_N else None
    u_star = ground_truth(p)
    fp_res = float(np.abs(it.step(u_star, p) - u_star).max())
    valid = int(rho <= 1.0 - 1e-6 and fp_res <= 1e-8)
    print("iterator,geometry,n,mode,rho,norm,fixed_point_residual,valid")
    norm_s = "" if norm is None else format(norm, ".6g")
    print(f"{it.name},{kind},{args.n},{mode},{rho:.6g},{norm_s},{fp_res:.6g},{valid}")
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = {}
    for key in ("n", "steps", "batch", "lr", "seed"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    cfg = default_config(args.arch, **overrides)
    model, log = train(cfg)
    save_model(model, args.out)
    if args.report:
        write_log(log, args.report)
    final = log[-1].loss if log else float("nan")
    print(f"trained {args.arch} for {cfg.steps} steps (final loss {final:.6g}); "
          f"model written to {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.model is None:
        raise CliError("bench needs --model with trained weights")
    model = load_model(args.model)
    suite = bench_mod.SETTINGS if args.suite == "all" else (_geometry_kind(args.suite),)
    try:
        results = bench_mod.run_benchmark(
            model, model_id=f"{model.arch}{model.depth}",
            suite=suite, threshold=args.tol, seed=args.seed,
        )
    except bench_mod.BenchError as exc:
        raise CliError(str(exc))
    print(",".join(bench_mod.BENCH_COLUMNS))
    for r in results:
        print(",".join(bench_mod.format_bench_row(r)))
    if args.report:
        bench_mod.write_bench_csv(results, args.report)
    if not all(r.converged for r in results):
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poisolve",
        description="Learned-correction iterative Poisson solvers: generate "
                    "problems, train correction operators, solve, certify "
                    "spectra, and benchmark cost ratios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a problem file")
    gen.add_argument("--kind", required=True,
                     choices=["square", "lshape", "cylinders", "square_poisson", "poisson"])
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    solve = sub.add_parser("solve", help="solve a problem file to tolerance")
    solve.add_argument("--problem", required=True)
    solve.add_argument("--solver", required=True, choices=SOLVER_NAMES)
    solve.add_argument("--model", default=None)
    solve.add_argument("--tol", type=float, default=0.01)
    solve.add_argument("--max-steps", type=int, default=200000)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--out", default=None, help="optional solution field file")
    solve.set_defaults(func=cmd_solve)

    spectral = sub.add_parser("spectral", help="spectral radius / validity report")
    spectral.add_argument("--solver", required=True, choices=SOLVER_NAMES)
    spectral.add_argument("--model", default=None)
    spectral.add_argument("--n", type=int, default=17)
    spectral.add_argument("--mode", choices=["dense", "power"], default=None)
    spectral.add_argument("--kind", default="square",
                          choices=["square", "lshape", "cylinders", "square_poisson", "poisson"])
    spectral.add_argument("--seed", type=int, default=0)
    spectral.set_defaults(func=cmd_spectral)

    tr = sub.add_parser("train", help="train a correction operator")
    tr.add_argument("--arch", required=True)
    tr.add_argument("--steps", type=int, default=None)
    tr.add_argument("--batch", type=int, default=None)
    tr.add_argument("--lr", type=float, default=None)
    tr.add_argument("--n", type=int, default=None)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--out", required=True)
    tr.add_argument("--report", default=None, help="training log CSV path")
    tr.set_defaults(func=cmd_train)

    be = sub.add_parser("bench", help="cost-ratio benchmark vs the baseline")
    be.add_argument("--model", default=None)
    be.add_argument("--suite", default="all",
                    choices=["all", "square", "lshape", "cylinders", "poisson"])
    be.add_argument("--tol", type=float, default=0.01)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--report", default=None)
    be.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (FileFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
