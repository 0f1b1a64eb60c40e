"""Closed-form expected solution of the forced heat equation on [0, 1]^d.

With G(x) = prod sin(pi x_i) the mean solution separates as

    E[u](t, x) = vartheta * G(x) * a(t),
    a(t) = exp(-k t) + int_0^t exp(-k (t - s)) E[W(xi(s))] ds,   k = nu d pi^2.

``temporal_factor_closed`` evaluates a(t) analytically for every
(process, forcing) pair; ``temporal_factor_quadrature`` integrates the same
convolution numerically and serves both as the fallback next to removable
singularities of the closed forms and as an independent check on them.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .noise import (PROCESSES, BrownianDrift, CompoundPoisson, ForcingMap, NoiseProcess,
                    OrnsteinUhlenbeck, expected_forcing, make_process, process_class)

CLAMP_WINDOW = 1e-3
SIMPSON_INTERVALS = 10_000
LOG10_E = math.log10(math.e)


@dataclass(frozen=True)
class ExperimentPhysics:
    d: int
    nu: float | np.ndarray
    process: NoiseProcess
    forcing: ForcingMap

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if np.any(np.asarray(self.nu) <= 0):
            raise ValueError("nu must be positive")
        object.__setattr__(self, "forcing", ForcingMap(self.forcing))


def spatial_mode(x) -> np.ndarray | float:
    """prod_i sin(pi x_i) over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    out = np.prod(np.sin(np.pi * x), axis=-1)
    return float(out) if out.ndim == 0 else out


def scaling_factor(d: int) -> float:
    """sqrt(d) * log10(exp(d)) = d^1.5 log10(e)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return d ** 1.5 * LOG10_E


def decay_rate(d: int, nu):
    return nu * d * np.pi ** 2


# -- building blocks: int_0^t exp(-k (t - s)) f(s) ds for simple f ------------

def _flat(k, t):
    # f(s) = 1
    return -np.expm1(-k * t) / k


def _ramp(k, t):
    # f(s) = s
    return t / k + np.expm1(-k * t) / k ** 2


def _quad_ramp(k, t):
    # f(s) = s^2
    return t ** 2 / k - 2 * t / k ** 2 + 2 / k ** 3 - 2 * np.exp(-k * t) / k ** 3


def _exp_kernel(k, alpha, t):
    # f(s) = exp(-alpha s)
    c = k - alpha
    return np.exp(-k * t) * np.expm1(c * t) / c


def _exp_ramp(k, alpha, t):
    # f(s) = s exp(-alpha s)
    c = k - alpha
    ect = np.exp(c * t)
    return np.exp(-k * t) * ((c * t - 1) * ect + 1) / c ** 2


def _singular_gaps(process: NoiseProcess, fmap: ForcingMap, k) -> list:
    """Distances from k to the poles of the matching closed form."""
    if fmap is ForcingMap.EXP_LINEAR:
        if isinstance(process, OrnsteinUhlenbeck):
            return [np.abs(k - 1.0), np.abs(k - 1.0 - process.theta)]
        return [np.abs(k - 1.0)]
    if isinstance(process, OrnsteinUhlenbeck):
        if fmap is ForcingMap.LINEAR:
            return [np.abs(k - process.theta)]
        return [np.abs(k - process.theta), np.abs(k - 2.0 * process.theta)]
    return []


def _closed(process: NoiseProcess, fmap: ForcingMap, k, t):
    base = np.exp(-k * t)
    if isinstance(process, (BrownianDrift, CompoundPoisson)):
        if isinstance(process, BrownianDrift):
            drift, var_rate = process.mu, process.sigma ** 2
        else:
            drift = process.lambda_rate * process.mu_j
            var_rate = process.lambda_rate * (process.mu_j ** 2 + process.sigma_j ** 2)
        # Both have E[xi] = drift * s and E[xi^2] = var_rate * s + drift^2 s^2.
        if fmap is ForcingMap.LINEAR:
            return base + drift * _ramp(k, t)
        if fmap is ForcingMap.EXP_LINEAR:
            return base + drift * _exp_ramp(k, 1.0, t)
        return base + drift ** 2 * _quad_ramp(k, t) + var_rate * _ramp(k, t)

    if isinstance(process, OrnsteinUhlenbeck):
        mu, gap, theta = process.mu, process.xi0 - process.mu, process.theta
        if fmap is ForcingMap.LINEAR:
            return base + mu * _flat(k, t) + gap * _exp_kernel(k, theta, t)
        if fmap is ForcingMap.EXP_LINEAR:
            return base + mu * _exp_kernel(k, 1.0, t) + gap * _exp_kernel(k, 1.0 + theta, t)
        # E[xi^2] = mu^2 + v + 2 mu gap e^{-theta s} + (gap^2 - v) e^{-2 theta s},
        # v = sigma^2 / (2 theta).
        v = process.sigma ** 2 / (2.0 * theta)
        return (base + (mu ** 2 + v) * _flat(k, t)
                + 2.0 * mu * gap * _exp_kernel(k, theta, t)
                + (gap ** 2 - v) * _exp_kernel(k, 2.0 * theta, t))

    raise TypeError(f"unsupported process {type(process).__name__}")


def _broadcast_physics(physics: ExperimentPhysics, t):
    """Flatten t, nu and every process parameter to a common 1-D shape."""
    params = {f.name: np.asarray(getattr(physics.process, f.name), dtype=np.float64)
              for f in dataclasses.fields(physics.process)}
    t = np.asarray(t, dtype=np.float64)
    nu = np.asarray(physics.nu, dtype=np.float64)
    shape = np.broadcast_shapes(t.shape, nu.shape, *(p.shape for p in params.values()))
    flat = lambda a: np.broadcast_to(a, shape).ravel()
    process = dataclasses.replace(physics.process, **{n: flat(p) for n, p in params.items()})
    return shape, flat(t), flat(nu), process


def _subset(process: NoiseProcess, idx) -> NoiseProcess:
    return dataclasses.replace(process, **{
        f.name: np.asarray(getattr(process, f.name))[idx] for f in dataclasses.fields(process)})


def _shape_result(out: np.ndarray, shape):
    out = out.reshape(shape)
    return float(out) if out.ndim == 0 else out


def _quadrature_flat(d, nu, process, fmap, t, intervals, chunk=256):
    n = intervals + (intervals % 2)
    weights = np.ones(n + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    grid = np.linspace(0.0, 1.0, n + 1)[:, None]
    k = decay_rate(d, nu)
    out = np.empty_like(t)
    for lo in range(0, t.size, chunk):
        sl = slice(lo, lo + chunk)
        tt, kk = t[sl], k[sl]
        s = grid * tt
        integrand = np.exp(-kk * (tt - s)) * expected_forcing(_subset(process, sl), fmap, s)
        h = tt / n
        out[sl] = np.exp(-kk * tt) + h / 3.0 * (weights @ integrand)
    return out


def temporal_factor_quadrature(physics: ExperimentPhysics, t, intervals: int = SIMPSON_INTERVALS):
    """a(t) by composite Simpson on [0, t] with ``intervals`` uniform panels."""
    shape, t, nu, process = _broadcast_physics(physics, t)
    out = _quadrature_flat(physics.d, nu, process, physics.forcing, t, intervals)
    return _shape_result(out, shape)


def temporal_factor_closed(physics: ExperimentPhysics, t):
    """a(t) from the closed forms; quadrature inside the clamp windows."""
    shape, t, nu, process = _broadcast_physics(physics, t)
    k = decay_rate(physics.d, nu)
    fmap = physics.forcing
    gaps = _singular_gaps(process, fmap, k)
    near = np.zeros(t.shape, dtype=bool)
    for g in gaps:
        near |= g < CLAMP_WINDOW
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.asarray(_closed(process, fmap, k, t), dtype=np.float64)
    out = np.broadcast_to(out, t.shape).copy()
    if near.any():
        idx = np.flatnonzero(near)
        out[idx] = _quadrature_flat(physics.d, nu[idx], _subset(process, idx), fmap, t[idx],
                                    SIMPSON_INTERVALS)
    return _shape_result(out, shape)


def in_clamp_window(physics: ExperimentPhysics, window: float = CLAMP_WINDOW):
    """True where the closed form would defer to quadrature."""
    _, t, nu, process = _broadcast_physics(physics, 0.0)
    k = decay_rate(physics.d, nu)
    near = np.zeros(nu.shape, dtype=bool)
    for g in _singular_gaps(process, physics.forcing, k):
        near |= g < window
    return near


def expected_solution(physics: ExperimentPhysics, t, x):
    """vartheta * G(x) * a(t); ``x`` has the spatial coordinates on its last axis."""
    return scaling_factor(physics.d) * spatial_mode(x) * temporal_factor_closed(physics, t)


def random_physics(fmap, process_kind: str, rng: np.random.Generator, *, xi0: float = 0.0,
                   avoid_clamp: bool = True) -> ExperimentPhysics:
    """One physics draw with d in {2,4,6,8} and everything else in its sampling box."""
    bounds = process_class(process_kind).bounds
    while True:
        d = int(rng.choice((2, 4, 6, 8)))
        nu = rng.uniform(0.01, 0.1)
        cols = np.array([rng.uniform(lo, hi) for _, lo, hi in bounds])
        physics = ExperimentPhysics(d, nu, make_process(process_kind, cols, xi0=xi0), fmap)
        if not (avoid_clamp and in_clamp_window(physics)):
            return physics


def closed_vs_quadrature_sweep(n_draws: int = 50, seed: int = 0,
                               times=np.linspace(0.1, 1.0, 10)) -> list[tuple[str, str, float]]:
    """Max |closed - quadrature| per (process, forcing) over random physics draws."""
    rng = np.random.default_rng(seed)
    out = []
    for kind in PROCESSES:
        for fmap in ForcingMap:
            worst = 0.0
            for _ in range(n_draws):
                physics = random_physics(fmap, kind, rng)
                dev = np.abs(temporal_factor_closed(physics, times)
                             - temporal_factor_quadrature(physics, times))
                worst = max(worst, float(np.max(dev)))
            out.append((kind, fmap.value, worst))
    return out
