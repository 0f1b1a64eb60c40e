# %% [markdown]
# # The analytic mean solution
#
# Averaging the stochastic heat equation over noise realizations gives a
# deterministic equation whose solution separates as
# E[u](t, x) = vartheta * G(x) * a(t). This script evaluates a(t) for every
# noise process and forcing map, and compares the closed form with quadrature.

# %%
import numpy as np

from expectation_pinn import (BrownianDrift, CompoundPoisson, ExperimentPhysics,
                              OrnsteinUhlenbeck, expected_solution, scaling_factor,
                              temporal_factor_closed, temporal_factor_quadrature)

processes = {
    "gaussian": BrownianDrift(mu=0.3, sigma=0.5),
    "ou": OrnsteinUhlenbeck(theta=1.2, mu=0.4, sigma=0.6),
    "poisson": CompoundPoisson(lambda_rate=2.0, mu_j=0.3, sigma_j=0.2),
}
t = np.linspace(0.0, 1.0, 6)

# %%
for name, proc in processes.items():
    for fmap in ("linear", "exp_linear", "square"):
        physics = ExperimentPhysics(d=2, nu=0.05, process=proc, forcing=fmap)
        closed = temporal_factor_closed(physics, t)
        quad = temporal_factor_quadrature(physics, t)
        print(f"{name:8s} {fmap:10s} a(t) = {np.round(closed, 4)}  "
              f"max |closed - quad| = {np.max(np.abs(closed - quad)):.1e}")

# %% [markdown]
# At the centre of the square, G = 1 and E[u] is vartheta * a(t).

# %%
physics = ExperimentPhysics(2, 0.05, processes["gaussian"], "linear")
print("vartheta(2) =", scaling_factor(2))
print("E[u](1, centre) =", expected_solution(physics, 1.0, [0.5, 0.5]))
