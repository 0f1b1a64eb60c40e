"""Physics-informed networks trained on Monte-Carlo forcing realizations
converge to the mean solution of a stochastically forced heat equation."""

from .experiments import ExperimentConfig, full_matrix, run_config, run_matrix
from .metrics import Problem, relative_l2, relative_l2_error
from .network import (ArchitectureSpec, NetworkJet, ParameterSet, derive_architecture,
                      forward_jet, forward_value, init_xavier, load_checkpoint,
                      loss_param_gradients, save_checkpoint)
from .noise import (BrownianDrift, CompoundPoisson, ForcingMap, OrnsteinUhlenbeck,
                    apply_forcing, expected_forcing, expected_xi, sample_xi, second_moment_xi)
from .oracle import (ExperimentPhysics, decay_rate, expected_solution, scaling_factor,
                     spatial_mode, temporal_factor_closed, temporal_factor_quadrature)
from .sampling import collocation_count, initial_slice, sample_interior, to_boundary
from .training import TrainConfig, TrainLog, train

__version__ = "0.1.0"
