"""Relative L2 error against the analytic mean solution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .network import ParameterSet, forward_value
from .noise import ForcingMap, make_process
from .oracle import ExperimentPhysics, expected_solution
from .sampling import TrainingBatch, sample_interior


@dataclass(frozen=True)
class Problem:
    """Which equation is being solved: dimension, noise process and forcing."""

    d: int
    process: str
    forcing: ForcingMap
    xi0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "forcing", ForcingMap(self.forcing))

    def physics(self, batch: TrainingBatch) -> ExperimentPhysics:
        process = make_process(self.process, batch.N, xi0=self.xi0)
        return ExperimentPhysics(self.d, batch.nu, process, self.forcing)

    def oracle(self, batch: TrainingBatch) -> np.ndarray:
        return expected_solution(self.physics(batch), batch.t, batch.X)


Predictor = Callable[[TrainingBatch], np.ndarray]


class DegenerateOracleError(ArithmeticError):
    pass


def relative_l2_error(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    denom = np.sqrt(np.sum(target ** 2))
    if denom < 1e-12:
        raise DegenerateOracleError("reference norm below 1e-12")
    return float(np.sqrt(np.sum((pred - target) ** 2)) / denom)


def evaluation_points(problem: Problem, n_points: int, rng: np.random.Generator) -> TrainingBatch:
    if n_points < 1:
        raise ValueError("n_points must be positive")
    return sample_interior(n_points, problem.d, problem.process, rng)


def relative_l2(model: Union[ParameterSet, Predictor], problem: Problem, n_points: int,
                rng: np.random.Generator | None = None, *, points: TrainingBatch | None = None) -> float:
    """||u_model - E[u]|| / ||E[u]|| over uniformly drawn (t, x, nu, noise params).

    ``model`` is a ParameterSet or any callable mapping a batch to predictions.
    Pass ``points`` to reuse a fixed evaluation set.
    """
    if points is None:
        points = evaluation_points(problem, n_points, rng)
    if isinstance(model, ParameterSet):
        pred = forward_value(model, points.network_inputs())
    else:
        pred = model(points)
    return relative_l2_error(pred, problem.oracle(points))
