"""Noise processes xi(t), forcing maps W(xi), and their moments.

Every process has an exact marginal law at a fixed time, so draws are taken
directly at the queried t without simulating a path.  Parameters may be
scalars or arrays broadcastable against t; the collocation sampler relies on
that to give each point its own parameter vector.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields
from typing import ClassVar

import numpy as np


def _check_time(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    return t


@dataclass(frozen=True)
class NoiseProcess:
    kind: ClassVar[str]
    # (name, low, high) for each parameter the network sees as input.
    bounds: ClassVar[tuple[tuple[str, float, float], ...]]

    @classmethod
    def n_params(cls) -> int:
        return len(cls.bounds)

    @classmethod
    def from_columns(cls, columns: np.ndarray, **extra) -> NoiseProcess:
        """Build a vectorised process from an (P, n_params) parameter matrix."""
        columns = np.asarray(columns, dtype=np.float64)
        kwargs = {name: columns[..., i] for i, (name, _, _) in enumerate(cls.bounds)}
        return cls(**kwargs, **extra)

    def sample(self, t, rng: np.random.Generator):
        raise NotImplementedError

    def mean(self, t):
        raise NotImplementedError

    def second_moment(self, t):
        raise NotImplementedError


@dataclass(frozen=True)
class BrownianDrift(NoiseProcess):
    """xi(t) = mu t + sigma B_t."""

    mu: float | np.ndarray
    sigma: float | np.ndarray

    kind: ClassVar[str] = "time_dependent_gaussian"
    bounds: ClassVar = (("mu", 0.1, 0.5), ("sigma", 0.1, 1.0))

    def sample(self, t, rng):
        t = _check_time(t)
        shape = np.broadcast_shapes(t.shape, np.shape(self.mu), np.shape(self.sigma))
        return self.mu * t + self.sigma * np.sqrt(t) * rng.standard_normal(shape)

    def mean(self, t):
        return self.mu * np.asarray(t, dtype=np.float64)

    def second_moment(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.sigma ** 2 * t + (self.mu * t) ** 2


@dataclass(frozen=True)
class OrnsteinUhlenbeck(NoiseProcess):
    """d xi = theta (mu - xi) dt + sigma dB, xi(0) = xi0."""

    theta: float | np.ndarray
    mu: float | np.ndarray
    sigma: float | np.ndarray
    xi0: float | np.ndarray = 0.0

    kind: ClassVar[str] = "ou_process"
    bounds: ClassVar = (("theta", 0.5, 2.0), ("mu", 0.1, 0.5), ("sigma", 0.1, 1.0))

    def _variance(self, t):
        return self.sigma ** 2 * -np.expm1(-2.0 * self.theta * t) / (2.0 * self.theta)

    def sample(self, t, rng):
        t = _check_time(t)
        shape = np.broadcast_shapes(t.shape, np.shape(self.theta), np.shape(self.mu),
                                    np.shape(self.sigma), np.shape(self.xi0))
        return self.mean(t) + np.sqrt(self._variance(t)) * rng.standard_normal(shape)

    def mean(self, t):
        t = np.asarray(t, dtype=np.float64)
        decay = np.exp(-self.theta * t)
        return self.xi0 * decay + self.mu * (1.0 - decay)

    def second_moment(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self._variance(t) + self.mean(t) ** 2


@dataclass(frozen=True)
class CompoundPoisson(NoiseProcess):
    """Sum of Poisson(lambda t) many N(mu_j, sigma_j^2) jumps."""

    lambda_rate: float | np.ndarray
    mu_j: float | np.ndarray
    sigma_j: float | np.ndarray

    kind: ClassVar[str] = "compound_poisson_process"
    bounds: ClassVar = (("lambda_rate", 0.1, 5.0), ("mu_j", 0.1, 0.5), ("sigma_j", 0.1, 1.0))

    def sample(self, t, rng):
        t = _check_time(t)
        shape = np.broadcast_shapes(t.shape, np.shape(self.lambda_rate), np.shape(self.mu_j),
                                    np.shape(self.sigma_j))
        n_jumps = rng.poisson(np.broadcast_to(self.lambda_rate * t, shape))
        # Given N jumps the sum is exactly N(N mu_j, N sigma_j^2).
        return n_jumps * self.mu_j + np.sqrt(n_jumps) * self.sigma_j * rng.standard_normal(shape)

    def mean(self, t):
        return self.lambda_rate * np.asarray(t, dtype=np.float64) * self.mu_j

    def second_moment(self, t):
        rate = self.lambda_rate * np.asarray(t, dtype=np.float64)
        return rate * (self.mu_j ** 2 + self.sigma_j ** 2) + (rate * self.mu_j) ** 2


PROCESSES: dict[str, type[NoiseProcess]] = {
    cls.kind: cls for cls in (BrownianDrift, OrnsteinUhlenbeck, CompoundPoisson)
}


def process_class(kind: str) -> type[NoiseProcess]:
    try:
        return PROCESSES[kind]
    except KeyError:
        raise ValueError(f"unknown noise process {kind!r}; expected one of {sorted(PROCESSES)}") from None


class ForcingMap(str, enum.Enum):
    LINEAR = "linear"
    EXP_LINEAR = "exp_linear"
    SQUARE = "square"


def sample_xi(process: NoiseProcess, t, rng: np.random.Generator):
    """One draw of xi(t) per entry of the broadcast (t, parameters) shape."""
    out = process.sample(t, rng)
    return float(out) if np.ndim(out) == 0 else out


def expected_xi(process: NoiseProcess, t):
    return process.mean(t)


def second_moment_xi(process: NoiseProcess, t):
    return process.second_moment(t)


def apply_forcing(fmap: ForcingMap | str, xi, t):
    fmap = ForcingMap(fmap)
    if fmap is ForcingMap.LINEAR:
        return xi
    if fmap is ForcingMap.EXP_LINEAR:
        return np.exp(-np.asarray(t, dtype=np.float64)) * xi
    return np.square(xi)


def expected_forcing(process: NoiseProcess, fmap: ForcingMap | str, t):
    """E[W(xi(t))]."""
    fmap = ForcingMap(fmap)
    if fmap is ForcingMap.LINEAR:
        return expected_xi(process, t)
    if fmap is ForcingMap.EXP_LINEAR:
        return np.exp(-np.asarray(t, dtype=np.float64)) * expected_xi(process, t)
    return second_moment_xi(process, t)


def process_params(process: NoiseProcess) -> dict:
    return {f.name: getattr(process, f.name) for f in fields(process)}


def make_process(kind: str, columns: np.ndarray, xi0: float = 0.0) -> NoiseProcess:
    """Vectorised process from a parameter matrix; ``xi0`` only applies to OU."""
    cls = process_class(kind)
    extra = {"xi0": xi0} if cls is OrnsteinUhlenbeck else {}
    return cls.from_columns(columns, **extra)
