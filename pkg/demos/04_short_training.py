# %% [markdown]
# # A short training run
#
# Train the d = 2 network on Gaussian noise with linear forcing for a few
# hundred epochs and watch the relative L2 error against the analytic mean
# fall. The acceptance suite runs the same configuration for 2,000 epochs.

# %%
import numpy as np

from expectation_pinn import ExperimentConfig, TrainConfig, run_config

config = ExperimentConfig(d=2, m=10, process="time_dependent_gaussian", forcing="linear",
                          train=TrainConfig(epochs=200, log_every=50, eval_points=2000))
report = run_config(config, out_dir="demo_runs")

# %%
print(f"relative L2 after {report.epochs} epochs: {report.relative_l2:.4f}")
print(open(f"demo_runs/{config.id}/loss_log.csv").read())
