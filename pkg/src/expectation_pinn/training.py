"""Monte-Carlo averaged physics-informed training of the mean solution.

Per epoch: draw a collocation batch, draw ``m`` independent forcing
realizations per point, average the residual loss over them, add the weighted
initial and boundary losses and take one optimizer step.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .metrics import Problem, evaluation_points, relative_l2
from .network import (JetBlock, JetCotangent, NetworkJet, NonFiniteLossError, ParameterSet,
                      loss_param_gradients)
from .noise import apply_forcing, make_process
from .oracle import scaling_factor, spatial_mode
from .sampling import (TrainingBatch, collocation_count, initial_slice, sample_interior,
                       to_boundary)

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")
LOG_COLUMNS = ("epoch", "residual", "initial", "boundary", "total", "rel_l2")


@dataclass
class TrainConfig:
    epochs: int = 10_000
    learning_rate: float = 0.003
    mc_samples: int = 1
    lambda_initial: float = 10.0
    lambda_boundary: float = 10.0
    optimizer: str = "adam"
    seed: int = 0
    log_every: int = 100
    # None -> collocation_count(d)
    n_points: int | None = None
    snapshot_points: int = 2000
    eval_points: int = 10_000
    eval_seed: int = 12345
    checkpoint_every: int | None = None
    # Test mode: reuse the first batch and realizations every epoch.
    frozen_batch: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.lambda_initial < 1 or self.lambda_boundary < 1:
            raise ValueError("loss weights must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainLog:
    rows: list[tuple] = field(default_factory=list)
    # Total loss of every epoch, for fluctuation statistics.
    total_history: list[float] = field(default_factory=list)

    def append(self, epoch, residual, initial, boundary, total, rel_l2):
        self.rows.append((epoch, residual, initial, boundary, total, rel_l2))

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=np.float64).reshape(-1, len(LOG_COLUMNS))

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(LOG_COLUMNS)
            for row in self.rows:
                writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


class TrainingAborted(RuntimeError):
    def __init__(self, message, epoch=None, run_id=None):
        super().__init__(message)
        self.epoch = epoch
        self.run_id = run_id


# -- loss terms ---------------------------------------------------------------

def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteLossError("non-finite network output")


def residual_loss(jets: NetworkJet, batch: TrainingBatch, w, vartheta: float) -> float:
    """mean over points of (du/dt - nu lap u - vartheta G(x) w)^2.

    ``w`` may be (p,) or (p, m); with m columns the loss is averaged over them.
    """
    _check_finite(jets.dt, jets.laplacian)
    r = jets.dt - batch.nu * jets.laplacian
    c = vartheta * spatial_mode(batch.X)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 1:
        w = w[:, None]
    return float(np.mean((r[:, None] - c[:, None] * w) ** 2))


def initial_loss(values_at_t0, X, vartheta: float) -> float:
    return float(np.mean((np.asarray(values_at_t0) - vartheta * spatial_mode(X)) ** 2))


def boundary_loss(values_on_boundary) -> float:
    return float(np.mean(np.asarray(values_on_boundary) ** 2))


def total_loss(residual_mc_mean: float, initial: float, boundary: float, config: TrainConfig) -> float:
    return residual_mc_mean + config.lambda_initial * initial + config.lambda_boundary * boundary


def draw_realizations(problem: Problem, batch: TrainingBatch, m: int,
                      rng: np.random.Generator) -> np.ndarray:
    """(p, m) forcing values W(xi(t_i)), fresh xi draws in every column."""
    process = make_process(problem.process, batch.N[:, None, :], xi0=problem.xi0)
    t = np.broadcast_to(batch.t[:, None], (len(batch), m))
    xi = process.sample(t, rng)
    return apply_forcing(problem.forcing, xi, t)


@dataclass
class LossBreakdown:
    residual: float
    initial: float
    boundary: float
    total: float


def full_loss_and_gradients(params: ParameterSet, interior: TrainingBatch, boundary: TrainingBatch,
                            w: np.ndarray, config: TrainConfig) -> tuple[LossBreakdown, ParameterSet]:
    """Complete training loss on one batch and its parameter gradient."""
    d = interior.d
    vartheta = scaling_factor(d)
    init = initial_slice(interior)
    c = vartheta * spatial_mode(interior.X)
    w = np.asarray(w, dtype=np.float64).reshape(len(interior), -1)
    w_bar = w.mean(axis=1)
    parts = {}

    def evaluator(jets):
        j_int, j_init, j_bnd = jets
        _check_finite(j_int.dt, j_int.laplacian, j_init.value, j_bnd.value)
        p = len(j_int.dt)
        r = j_int.dt - interior.nu * j_int.laplacian
        l_res = residual_loss(j_int, interior, w, vartheta)
        l_init = initial_loss(j_init.value, init.X, vartheta)
        l_bnd = boundary_loss(j_bnd.value)
        total = total_loss(l_res, l_init, l_bnd, config)
        parts.update(residual=l_res, initial=l_init, boundary=l_bnd, total=total)
        # d/dr of mean_j mean_i (r_i - c_i w_ij)^2 only sees the realization mean.
        g_r = 2.0 * (r - c * w_bar) / p
        g_init = config.lambda_initial * 2.0 * (j_init.value - c) / p
        g_bnd = config.lambda_boundary * 2.0 * j_bnd.value / len(j_bnd.value)
        return total, [JetCotangent(dt=g_r, laplacian=-interior.nu * g_r),
                       JetCotangent(value=g_init),
                       JetCotangent(value=g_bnd)]

    blocks = [JetBlock(interior.network_inputs(), d),
              JetBlock(init.network_inputs(), d, derivatives=False),
              JetBlock(boundary.network_inputs(), d, derivatives=False)]
    _, grads = loss_param_gradients(params, blocks, evaluator)
    return LossBreakdown(**parts), grads


# -- optimizers ---------------------------------------------------------------

@dataclass
class OptimizerState:
    kind: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: ParameterSet | None = None
    v: ParameterSet | None = None


def optimizer_step(state: OptimizerState, params: ParameterSet, grads: ParameterSet,
                   lr: float) -> ParameterSet:
    """Return updated parameters; ``state`` is advanced in place."""
    if state.kind == "sgd":
        return ParameterSet([p - lr * g for p, g in zip(params.weights, grads.weights)],
                            [p - lr * g for p, g in zip(params.biases, grads.biases)])
    if state.kind != "adam":
        raise ValueError(f"unknown optimizer {state.kind!r}")
    if state.m is None:
        state.m, state.v = params.zeros_like(), params.zeros_like()
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    new = []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        new.append(p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return ParameterSet(new[0::2], new[1::2])


# -- training loop ------------------------------------------------------------

def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    batch, noise, boundary, snapshot = (np.random.default_rng(s) for s in ss.spawn(4))
    return batch, noise, boundary, snapshot


def train(model: ParameterSet, problem: Problem, config: TrainConfig, *, run_id: str | None = None,
          on_checkpoint: Callable[[int, ParameterSet], None] | None = None,
          ) -> tuple[ParameterSet, TrainLog]:
    """Train ``model`` on ``problem``; returns the final parameters and the log."""
    params = model.copy()
    p = config.n_points or collocation_count(problem.d)
    rng_batch, rng_noise, rng_bnd, rng_snap = _streams(config.seed)
    snapshot_set = evaluation_points(problem, config.snapshot_points, rng_snap)
    opt = OptimizerState(kind=config.optimizer)
    history = TrainLog()
    frozen = None

    for epoch in range(1, config.epochs + 1):
        if frozen is None:
            interior = sample_interior(p, problem.d, problem.process, rng_batch)
            w = draw_realizations(problem, interior, config.mc_samples, rng_noise)
            boundary = to_boundary(interior, rng_bnd)
            if config.frozen_batch:
                frozen = (interior, w, boundary)
        else:
            interior, w, boundary = frozen

        try:
            parts, grads = full_loss_and_gradients(params, interior, boundary, w, config)
        except NonFiniteLossError as exc:
            raise TrainingAborted(f"run {run_id}: non-finite loss at epoch {epoch}",
                                  epoch=epoch, run_id=run_id) from exc
        history.total_history.append(parts.total)
        params = optimizer_step(opt, params, grads, config.learning_rate)

        if epoch % config.log_every == 0:
            err = relative_l2(params, problem, 0, points=snapshot_set)
            history.append(epoch, parts.residual, parts.initial, parts.boundary, parts.total, err)
            log.debug("epoch %d total %.4e rel_l2 %.4f", epoch, parts.total, err)
        if on_checkpoint is not None and config.checkpoint_every and epoch % config.checkpoint_every == 0:
            on_checkpoint(epoch, params)

    return params, history
