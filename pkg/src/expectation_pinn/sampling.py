"""Collocation batches for training and evaluation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .noise import NoiseProcess, process_class

NU_RANGE = (0.01, 0.1)


def collocation_count(d: int) -> int:
    """min(round(1000 (d/2)^2), 5000)."""
    if d < 2:
        raise ValueError("d must be >= 2")
    return min(int(np.floor(1000.0 * (d / 2.0) ** 2 + 0.5)), 5000)


@dataclass
class TrainingBatch:
    t: np.ndarray        # (p,)
    X: np.ndarray        # (p, d)
    nu: np.ndarray       # (p,)
    N: np.ndarray        # (p, n_noise_params)
    process_kind: str

    def __len__(self):
        return len(self.t)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def network_inputs(self) -> np.ndarray:
        """Rows laid out as (t, x_1..x_d, nu, noise params)."""
        return np.column_stack([self.t, self.X, self.nu, self.N])

    def process(self, **extra) -> NoiseProcess:
        """Vectorised process carrying one parameter vector per row."""
        return process_class(self.process_kind).from_columns(self.N, **extra)


# Same layout; every spatial point lies on the boundary of the unit cube.
BoundaryBatch = TrainingBatch


def sample_interior(p: int, d: int, process_kind: str, rng: np.random.Generator) -> TrainingBatch:
    if p < 1:
        raise ValueError("batch size must be positive")
    bounds = process_class(process_kind).bounds
    X = rng.uniform(0.0, 1.0, size=(p, d))
    t = rng.uniform(0.0, 1.0, size=p)
    nu = rng.uniform(*NU_RANGE, size=p)
    lo = np.array([b[1] for b in bounds])
    hi = np.array([b[2] for b in bounds])
    N = rng.uniform(lo, hi, size=(p, len(bounds)))
    return TrainingBatch(t, X, nu, N, process_kind)


def to_boundary(batch: TrainingBatch, rng: np.random.Generator) -> BoundaryBatch:
    """Project each row onto a uniformly chosen face of [0, 1]^d."""
    p, d = batch.X.shape
    axis = rng.integers(0, d, size=p)
    side = rng.integers(0, 2, size=p).astype(np.float64)
    X = batch.X.copy()
    X[np.arange(p), axis] = side
    return dataclasses.replace(batch, X=X, t=batch.t.copy(), nu=batch.nu.copy(), N=batch.N.copy())


def initial_slice(batch: TrainingBatch) -> TrainingBatch:
    return dataclasses.replace(batch, t=np.zeros_like(batch.t))
