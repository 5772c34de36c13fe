"""Trainers and convex baselines.

Trainers implement plain SGD (``W <- W - lr * grad``) on the mini-batch loss,
optionally with fresh Gaussian label noise added to each sampled label every
step.  Baselines solve the two convex interpolation problems: minimum nuclear
norm (ADMM with exact sub-steps) and minimum Frobenius norm (closed form via
the measurement Gram matrix).
"""

import csv
import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import linalg
from .errors import ConvergenceError, DivergenceError
from .measurements import MeasurementSet
from .network import DeepNet, end_to_end, grad, loss, trace_hessian

MODES = ("vanilla", "label_noise")

DIVERGENCE_CAP = 1e12


@dataclass
class TrainConfig:
    steps: int
    batch: int
    lr: float
    noise_std: float = 0.0
    init_std: float = 0.3
    log_every: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")
        if self.batch < 1:
            raise ValueError(f"batch must be positive, got {self.batch}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be nonnegative, got {self.noise_std}")
        if self.init_std <= 0:
            raise ValueError(f"init_std must be positive, got {self.init_std}")
        if self.log_every < 1:
            raise ValueError(f"log_every must be positive, got {self.log_every}")


@dataclass
class RunRecord:
    step: int
    train_loss: float
    test_loss: float  # ||E(W) - M*||_F^2, NaN when no ground truth
    nuclear_norm: float
    paper_trace: float


@dataclass
class RunLog:
    mode: str
    config: TrainConfig
    records: List[RunRecord] = field(default_factory=list)
    final_net: Optional[DeepNet] = None

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def write_csv(self, path) -> None:
        """RunLog schema: one row per record, '.' decimal, no locale."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["step", "train_loss", "test_loss", "nuclear_norm", "paper_trace"]
            )
            for r in self.records:
                writer.writerow(
                    [r.step, repr(r.train_loss), repr(r.test_loss),
                     repr(r.nuclear_norm), repr(r.paper_trace)]
                )

def read_run_csv(path) -> List[RunRecord]:
    """Parse a RunLog CSV; raises ValueError naming the offending line."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}:1: empty CSV") from None
        expected = ["step", "train_loss", "test_loss", "nuclear_norm", "paper_trace"]
        if header != expected:
            raise ValueError(f"{path}:1: bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                records.append(
                    RunRecord(int(row[0]), float(row[1]), float(row[2]),
                              float(row[3]), float(row[4]))
                )
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from None
    return records


def init_net(dims, init_std, seed) -> DeepNet:
    """Layers with i.i.d. zero-mean normal entries of the given std.

    Training nets must be expressive (intermediate widths at least
    min(d0, dL)) so that zero loss is attainable.
    """
    if init_std <= 0:
        raise ValueError(f"init_std must be positive, got {init_std}")
    floor = min(dims[0], dims[-1])
    if any(d < floor for d in dims[1:-1]):
        raise ValueError(
            f"intermediate widths {list(dims[1:-1])} below min(d0, dL)={floor}"
        )
    rng = np.random.default_rng(seed)
    layers = [
        init_std * rng.standard_normal((hi, lo))
        for lo, hi in zip(dims[:-1], dims[1:])
    ]
    return DeepNet(layers)


def train(net: DeepNet, ms: MeasurementSet, cfg: TrainConfig, mode) -> RunLog:
    """Run SGD for ``cfg.steps`` updates and return the telemetry log.

    Batches are sampled uniformly with replacement, except ``batch == n``
    which uses the full dataset every step (plain GD).  In ``label_noise``
    mode every sampled example receives a fresh offset ``N(0, noise_std^2)``
    each step, drawn from a stream independent of the batch sampling so the
    two modes follow identical batch sequences for the same seed.

    Raises :class:`DivergenceError` when the loss exceeds ``1e12`` or turns
    non-finite, naming the step.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if cfg.batch > ms.n:
        raise ValueError(f"batch {cfg.batch} exceeds dataset size {ms.n}")
    ss = np.random.SeedSequence(cfg.seed)
    batch_seed, noise_seed = ss.spawn(2)
    rng_batch = np.random.default_rng(batch_seed)
    rng_noise = np.random.default_rng(noise_seed)
    full_batch = cfg.batch == ms.n
    add_noise = mode == "label_noise" and cfg.noise_std > 0

    current = net.copy()
    log = RunLog(mode=mode, config=cfg)

    def record(step):
        train_loss = loss(current, ms)
        _guard(train_loss, step)
        e = end_to_end(current)
        test_loss = float("nan")
        if ms.ground_truth is not None:
            test_loss = float(np.sum((e - ms.ground_truth) ** 2))
        log.records.append(
            RunRecord(
                step=step,
                train_loss=train_loss,
                test_loss=test_loss,
                nuclear_norm=linalg.nuclear_norm(e),
                paper_trace=trace_hessian(current, ms).paper_trace,
            )
        )

    record(0)
    for step in range(1, cfg.steps + 1):
        if full_batch:
            idx = np.arange(ms.n)
        else:
            idx = rng_batch.integers(0, ms.n, size=cfg.batch)
        offsets = None
        if add_noise:
            offsets = cfg.noise_std * rng_noise.standard_normal(cfg.batch)
        grads = grad(current, ms, idx, offsets)
        for w, g in zip(current.layers, grads):
            if not np.all(np.isfinite(g)):
                raise DivergenceError(
                    f"training diverged at step {step} (non-finite gradient)",
                    step=step,
                )
            w -= cfg.lr * g
        if step % cfg.log_every == 0 or step == cfg.steps:
            record(step)
    log.final_net = current
    return log


def _guard(value, step):
    if not np.isfinite(value) or value > DIVERGENCE_CAP:
        raise DivergenceError(
            f"training diverged at step {step} (loss {value:.3e})", step=step
        )


def solve_min_frobenius(ms: MeasurementSet) -> np.ndarray:
    """Minimum Frobenius norm interpolant ``sum_i A_i [G^-1 b]_i``.

    The solution lies in the span of the sensing matrices and satisfies all
    measurements exactly; it is the Euclidean projection of any interpolant
    (in particular the ground truth) onto that span.
    """
    coeffs = linalg.gram_solve(ms.gram(), ms.labels)
    return ms.adjoint(coeffs)


def solve_min_nuclear(ms: MeasurementSet, tol=1e-8, max_iter=50000) -> np.ndarray:
    """Minimum nuclear norm interpolant via ADMM splitting.

    Solves ``min ||M||_* s.t. <A_i, M> = b_i`` by alternating an exact affine
    projection (Gram solve) with singular value thresholding, with dual
    ascent on the split ``M = Z``; the penalty is fixed at rho = 1 for
    determinism.  Returns the affine-feasible iterate.

    Raises :class:`ConvergenceError` (carrying both residuals) if the primal
    and dual residuals fail to drop below ``tol`` within ``max_iter``.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    solver = linalg.GramSolver(ms.gram())

    def project(x):
        misfit = ms.apply(x) - ms.labels
        return x - ms.adjoint(solver.solve(misfit))

    rho = 1.0
    shape = (ms.d_out, ms.d_in)
    z = np.zeros(shape)
    u = np.zeros(shape)
    m = project(z - u)
    scale = 1.0 + float(np.linalg.norm(ms.labels))
    for _ in range(max_iter):
        m = project(z - u)
        z_new = linalg.svt(m + u, 1.0 / rho)
        dual = rho * np.linalg.norm(z_new - z)
        z = z_new
        u += m - z
        primal = np.linalg.norm(m - z)
        if primal < tol * scale and dual < tol * scale:
            return m
    raise ConvergenceError(
        f"ADMM did not reach tol={tol} in {max_iter} iterations "
        f"(primal {primal:.3e}, dual {dual:.3e})",
        primal_residual=float(primal),
        dual_residual=float(dual),
    )
