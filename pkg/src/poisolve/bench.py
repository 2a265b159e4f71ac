"""Cost-ratio benchmarks: trained model vs its classical baseline.

Each row solves one evaluation setting twice from the same random start,
once with the baseline and once with the wrapped model, both down to the
same relative-error threshold against a precomputed reference solution,
and reports the layer and multiply-add ratios. A model that fails to
converge on a setting is flagged, never silently scored: a converged
answer is always correct because the wrapped iterator shares the
baseline's fixed point.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .geometry import SETTINGS, GeometrySpec, generate
from .grid import Problem, residual_norms
from .iterators import (
    Iterator,
    JacobiIterator,
    MultigridConfig,
    MultigridIterator,
    ground_truth,
    solve_to_tol,
)
from .model import CorrectionModel, PhiIterator
from .spectral import ValidityVerdict, certify
from .training import square_problem

DEFAULT_THRESHOLD = 0.01  # stop at 1 percent of the initial error


class BenchError(ValueError):
    """Benchmark precondition failure (e.g. an uncertified model)."""


@dataclass
class BenchResult:
    model_id: str
    baseline_id: str
    setting: str
    n: int
    layers_model: int
    layers_base: int
    ops_model: int
    ops_base: int
    layers_ratio: float | None
    ops_ratio: float | None
    converged: bool


def baseline_for(model: CorrectionModel) -> Iterator:
    """Conv stacks race plain Jacobi; U-nets race multigrid of equal depth."""
    if model.arch == "conv":
        return JacobiIterator()
    return MultigridIterator(MultigridConfig(depth=model.depth))


def bench_size_for(model: CorrectionModel) -> int:
    """Models are evaluated above their training size: 65 for conv stacks
    (trained at 17), 257 for U-nets (trained at 65)."""
    return 65 if model.arch == "conv" else 257


def train_size_for(model: CorrectionModel) -> int:
    return 17 if model.arch == "conv" else 65


def certify_for_bench(model: CorrectionModel) -> ValidityVerdict:
    """Certify the wrapped iterator on its training geometry and size."""
    n = train_size_for(model)
    p = square_problem(n, (0.3, -0.4, 0.7, 0.2))
    return certify(PhiIterator(JacobiIterator(), model), p)


def run_benchmark(
    model: CorrectionModel,
    model_id: str = "model",
    suite=SETTINGS,
    threshold: float = DEFAULT_THRESHOLD,
    n: int | None = None,
    seed: int = 0,
    max_steps: int = 200000,
    skip_certification: bool = False,
) -> list[BenchResult]:
    if not skip_certification:
        verdict = certify_for_bench(model)
        if not verdict.valid:
            raise BenchError(
                f"model is not certified valid on its training geometry "
                f"(rho = {verdict.rho_estimate:.6f}, "
                f"fixed-point residual = {verdict.fixed_point_residual:.3e})"
            )
    n = n or bench_size_for(model)
    base = baseline_for(model)
    phi = PhiIterator(JacobiIterator(), model, name=model_id)
    results = []
    for setting in suite:
        if setting not in SETTINGS:
            raise ValueError(f"unknown setting {setting!r}")
        p = generate(GeometrySpec(kind=setting, n=n, seed=seed))
        u_star = ground_truth(p)
        rng = np.random.default_rng(seed + 1)
        u0 = np.where(p.mask == 1, rng.standard_normal((n, n)), p.b)
        ub, rb = solve_to_tol(base, p, u0, threshold, max_steps, u_star=u_star)
        um, rm = solve_to_tol(phi, p, u0, threshold, max_steps, u_star=u_star)
        both = rb.converged and rm.converged
        for u, rep in ((ub, rb), (um, rm)):
            if rep.converged:
                _check_solution(p, u, u0, threshold)
        results.append(BenchResult(
            model_id=model_id,
            baseline_id=base.name,
            setting=setting,
            n=n,
            layers_model=rm.conv_layers,
            layers_base=rb.conv_layers,
            ops_model=rm.mul_adds,
            ops_base=rb.mul_adds,
            layers_ratio=rm.conv_layers / rb.conv_layers if both else None,
            ops_ratio=rm.mul_adds / rb.mul_adds if both else None,
            converged=both,
        ))
    return results


def _check_solution(p: Problem, u, u0, threshold: float) -> None:
    """A converged benchmark answer must actually solve the system."""
    interior, boundary = residual_norms(p, u)
    initial = residual_norms(p, u0)[0]
    if boundary != 0.0:
        raise AssertionError(f"benchmark solution violates the boundary by {boundary:.3e}")
    if interior > 10.0 * threshold * max(initial, 1.0):
        raise AssertionError(
            f"benchmark solution residual {interior:.3e} exceeds "
            f"{10.0 * threshold:.3e} x initial {initial:.3e}"
        )


BENCH_COLUMNS = [
    "model", "baseline", "setting", "n",
    "layers_model", "layers_base", "ops_model", "ops_base",
    "layers_ratio", "ops_ratio", "converged",
]


def write_bench_csv(results: list[BenchResult], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_COLUMNS)
        for r in results:
            writer.writerow(format_bench_row(r))


def format_bench_row(r: BenchResult) -> list[str]:
    ratio = lambda x: "" if x is None else format(x, ".6g")  # noqa: E731
    return [
        r.model_id, r.baseline_id, r.setting, str(r.n),
        str(r.layers_model), str(r.layers_base),
        str(r.ops_model), str(r.ops_base),
        ratio(r.layers_ratio), ratio(r.ops_ratio),
        str(int(r.converged)),
    ]
