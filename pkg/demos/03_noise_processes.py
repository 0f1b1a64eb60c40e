# %% [markdown]
# # Noise processes and forcing maps
#
# Each process is sampled from its exact marginal at time t. The sample mean
# of the forcing W(xi(t)) should agree with the closed-form expectation that
# the analytic oracle integrates.

# %%
import numpy as np

from expectation_pinn import (BrownianDrift, CompoundPoisson, OrnsteinUhlenbeck,
                              apply_forcing, expected_forcing, sample_xi)

rng = np.random.default_rng(0)
t = 0.8
n = 200_000
for proc in (BrownianDrift(0.3, 0.5), OrnsteinUhlenbeck(1.2, 0.4, 0.6, xi0=1.0),
             CompoundPoisson(2.0, 0.3, 0.2)):
    xi = sample_xi(proc, np.full(n, t), rng)
    for fmap in ("linear", "exp_linear", "square"):
        w = apply_forcing(fmap, xi, t)
        print(f"{proc.kind:26s} {fmap:10s} sample {w.mean():+.4f} +- {w.std() / np.sqrt(n):.4f}"
              f"   exact {expected_forcing(proc, fmap, t):+.4f}")
