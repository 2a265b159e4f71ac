"""Training the correction operator on sampled square Laplace problems.

The objective is the squared distance to the reference solution after k
wrapped-iterator steps, with k drawn per sample from {1, ..., k_max} and
the start field drawn white-Gaussian then reset to the boundary values.
Gradients are computed by an explicit reverse pass over the unrolled
steps: the adjoint of a Jacobi sweep is the masked quarter-cross, the
adjoint of the correction net is the tape walk in :mod:`poisolve.model`,
and the per-sample loss terms inject their adjoints at their own k.

The base solver is fixed to Jacobi here; the wrapped iterator remains
usable with any base at inference time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .grid import Field, Problem, make_problem, residual_norms
from .iterators import JacobiIterator, ground_truth
from .model import CorrectionModel, backward, forward, init_model, parse_arch
from .spectral import linear_part, spectral_radius
from . import spectral as _spectral
from .model import PhiIterator


class TrainingError(RuntimeError):
    def __init__(self, message, step=None, log=None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step
        self.log = log or []


@dataclass
class TrainConfig:
    arch: str = "conv3"
    n: int = 17
    k_max: int = 20
    batch: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    steps: int = 20000
    seed: int = 0
    channels: int | None = None
    bottom_layers: int | None = None
    rho_every: int = 500

    def __post_init__(self):
        if self.k_max < 1 or self.batch < 1 or self.lr <= 0 or self.steps < 0:
            raise ValueError("invalid training configuration")


def default_config(arch: str, **overrides) -> TrainConfig:
    """Per-architecture defaults: conv nets train at n=17, U-nets at n=65."""
    kind, _ = parse_arch(arch)
    base = dict(arch=arch)
    if kind == "conv":
        base.update(n=17, steps=20000)
    else:
        base.update(n=65, steps=4000)
    base.update(overrides)
    return TrainConfig(**base)


@dataclass
class TrainSample:
    problem: Problem
    u_star: Field
    u0: Field
    k: int


@dataclass
class LogRow:
    step: int
    loss: float
    rho_estimate: float | None
    wall_seconds: float


def square_mask(n: int) -> np.ndarray:
    mask = np.zeros((n, n), dtype=np.uint8)
    mask[1:-1, 1:-1] = 1
    return mask


def square_problem(n: int, sides) -> Problem:
    """Square Laplace problem with constant values per side.

    Corner cells take the value of the row side (top and bottom win over
    left and right).
    """
    top, bottom, left, right = sides
    b = np.zeros((n, n))
    b[0, :] = top
    b[-1, :] = bottom
    b[1:-1, 0] = left
    b[1:-1, -1] = right
    return make_problem(square_mask(n), b, np.zeros((n, n)))


def sample_square_problem(n: int, rng: np.random.Generator) -> Problem:
    """Laplace on the square with each side a fresh uniform value in [-1, 1]."""
    if n < 5:
        raise ValueError(f"training grid too small: n = {n}")
    return square_problem(n, rng.uniform(-1.0, 1.0, size=4))


class SquareSolutionCache:
    """Reference solutions for sampled square problems in O(1) per sample.

    The solution of the Laplace problem is linear in the boundary data, so
    the four unit-side solutions span every sampled problem exactly.
    """

    def __init__(self, n: int):
        self.n = n
        self.basis = []
        for side in range(4):
            sides = [0.0] * 4
            sides[side] = 1.0
            self.basis.append(ground_truth(square_problem(n, sides)))

    def solution(self, p: Problem) -> Field:
        sides = (p.b[0, 1], p.b[-1, 1], p.b[1, 0], p.b[1, -1])
        u = sides[0] * self.basis[0]
        for v, base in zip(sides[1:], self.basis[1:]):
            u = u + v * base
        return u


def sample_batch(cfg: TrainConfig, cache: SquareSolutionCache,
                 rng: np.random.Generator) -> list[TrainSample]:
    batch = []
    for _ in range(cfg.batch):
        p = sample_square_problem(cfg.n, rng)
        u_star = cache.solution(p)
        u0 = np.where(p.mask == 1, rng.standard_normal((cfg.n, cfg.n)), p.b)
        k = int(rng.integers(1, cfg.k_max + 1))
        batch.append(TrainSample(problem=p, u_star=u_star, u0=u0, k=k))
    return batch


# ------------------------------------------------------------------
# Batched unrolled forward/backward. Shapes are (B, 1, n, n).
# ------------------------------------------------------------------

def _cross(u: np.ndarray) -> np.ndarray:
    up = np.zeros((u.shape[0], 1, u.shape[2] + 2, u.shape[3] + 2))
    up[:, :, 1:-1, 1:-1] = u
    return 0.25 * (up[:, :, :-2, 1:-1] + up[:, :, 2:, 1:-1]
                   + up[:, :, 1:-1, :-2] + up[:, :, 1:-1, 2:])


def _stack(batch: list[TrainSample]):
    def pile(arrs):
        return np.stack(arrs)[:, None, :, :]

    M = pile([s.problem.mask.astype(np.float64) for s in batch])
    bb = pile([s.problem.b for s in batch])
    q = pile([0.25 * s.problem.h ** 2 * s.problem.f for s in batch])
    u0 = pile([s.u0 for s in batch])
    ustar = pile([s.u_star for s in batch])
    return M, bb, q, u0, ustar


def _unrolled(model: CorrectionModel, batch: list[TrainSample], record: bool):
    """Run every sample to its own k; return loss and (if record) the tapes."""
    M, bb, q, u, ustar = _stack(batch)
    ks = np.array([s.k for s in batch])
    k_top = int(ks.max())
    loss = 0.0
    finals = np.zeros_like(u)
    steps = []
    for t in range(1, k_top + 1):
        psi = M * (_cross(u) + q) + (1.0 - M) * bb
        w = psi - u
        tape: list | None = [] if record else None
        z = forward(model, w, tape)
        u_next = psi + M * z
        if not np.isfinite(u_next).all():
            raise TrainingError(f"non-finite iterate at unroll step {t}")
        if record:
            steps.append(tape)
        done = ks == t
        if done.any():
            finals[done] = u_next[done]
            diff = u_next[done] - ustar[done]
            loss += float((diff * diff).sum())
        u = u_next
    loss /= len(batch)
    return loss, (M, ustar, ks, finals, steps)


def loss(model: CorrectionModel, batch: list[TrainSample]) -> float:
    """Mean over the batch of ||Phi^k(u0) - u*||_2^2."""
    if not batch:
        raise ValueError("empty batch")
    value, _ = _unrolled(model, batch, record=False)
    return value


def loss_and_grad(model: CorrectionModel, batch: list[TrainSample]):
    if not batch:
        raise ValueError("empty batch")
    value, (M, ustar, ks, finals, steps) = _unrolled(model, batch, record=True)
    grads = [np.zeros_like(layer.weights) for layer in model.layers]
    B = len(batch)
    g = np.zeros_like(ustar)
    for t in range(int(ks.max()), 0, -1):
        done = ks == t
        if done.any():
            g[done] += (2.0 / B) * (finals[done] - ustar[done])
        a = M * g
        gw = backward(model, steps[t - 1], a, grads)
        gpsi = g + gw
        g = _cross(M * gpsi) - gw
    return value, grads


def grad(model: CorrectionModel, batch: list[TrainSample]):
    """Exact gradient of the batch loss w.r.t. every kernel weight."""
    return loss_and_grad(model, batch)[1]


class Adam:
    """Adaptive-moment gradient descent on the kernel list."""

    def __init__(self, model: CorrectionModel, lr, beta1, beta2, eps):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(layer.weights) for layer in model.layers]
        self.v = [np.zeros_like(layer.weights) for layer in model.layers]

    def update(self, model: CorrectionModel, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for layer, g, m, v in zip(model.layers, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            layer.weights = layer.weights - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _train_rho(model: CorrectionModel, p: Problem) -> float:
    """Spectral radius of the wrapped iterator at the training size.

    Dense when the grid allows it; otherwise a shortened power estimate
    good enough for progress logging (final certification reruns the full
    estimator).
    """
    phi = PhiIterator(JacobiIterator(), model)
    lp = linear_part(phi, p)
    if p.n <= _spectral.DENSE_MAX_N:
        return spectral_radius(lp, p.n, mode="dense")
    return spectral_radius(lp, p.n, mode="power", iterations=600, restarts=2)


def train(cfg: TrainConfig, log_path=None):
    """Run the optimizer; returns (model, log rows).

    Fully reproducible from cfg.seed. Aborts with TrainingError on
    divergence and on a failed post-training validity check.
    """
    model = init_model(cfg.arch, seed=cfg.seed, channels=cfg.channels,
                       bottom_layers=cfg.bottom_layers)
    cache = SquareSolutionCache(cfg.n)
    model.check_compatible(cfg.n)
    rng = np.random.default_rng(cfg.seed + 1000003)
    opt = Adam(model, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    log: list[LogRow] = []
    t_start = time.time()
    geometry = square_problem(cfg.n, (0.0, 0.0, 0.0, 0.0))
    for step in range(1, cfg.steps + 1):
        batch = sample_batch(cfg, cache, rng)
        try:
            value, grads = loss_and_grad(model, batch)
        except TrainingError as exc:
            raise TrainingError(str(exc), step=step, log=log) from exc
        if not np.isfinite(value) or value > 1e6:
            raise TrainingError(f"training diverged (loss = {value:.3e})",
                                step=step, log=log)
        opt.update(model, grads)
        rho = None
        if cfg.rho_every and (step % cfg.rho_every == 0 or step == cfg.steps):
            rho = _train_rho(model, geometry)
        log.append(LogRow(step=step, loss=value, rho_estimate=rho,
                          wall_seconds=time.time() - t_start))
    if cfg.steps > 0:
        final_rho = log[-1].rho_estimate
        if final_rho is None:
            final_rho = _train_rho(model, geometry)
        if final_rho >= 1.0:
            raise TrainingError(
                f"trained iterator is not contractive (rho = {final_rho:.6f})",
                step=cfg.steps, log=log)
    if log_path is not None:
        write_log(log, log_path)
    return model, log


def write_log(log: list[LogRow], path) -> None:
    with open(path, "w") as fh:
        fh.write("step,loss,rho_estimate,wall_seconds\n")
        for row in log:
            rho = "" if row.rho_estimate is None else format(row.rho_estimate, ".12g")
            fh.write(f"{row.step},{row.loss:.12g},{rho},{row.wall_seconds:.3f}\n")
