# %% [markdown]
# # Derivatives of the network by forward jets
#
# The residual needs du/dt and the spatial Laplacian at every collocation
# point. forward_jet propagates value, first and second directional
# derivatives through the tanh layers in a single pass. Here they are checked
# against central finite differences.

# %%
import numpy as np

from expectation_pinn import derive_architecture, forward_jet, forward_value, init_xavier

d, k = 2, 2
params = init_xavier(derive_architecture(d, k), seed=0)
z = np.array([0.4, 0.3, 0.7, 0.05, 0.2, 0.6])   # t, x1, x2, nu, mu, sigma
jet = forward_jet(params, z, d)
print(jet)

# %%
h = 1e-4
def shifted(i, step):
    out = z.copy()
    out[i] += step
    return forward_value(params, out[None])[0]

dt_fd = (shifted(0, h) - shifted(0, -h)) / (2 * h)
u0 = forward_value(params, z[None])[0]
lap_fd = sum((shifted(i, h) - 2 * u0 + shifted(i, -h)) / h ** 2 for i in (1, 2))
print(f"du/dt  jet {jet.dt:+.8f}  fd {dt_fd:+.8f}")
print(f"lap u  jet {jet.laplacian:+.8f}  fd {lap_fd:+.8f}")
