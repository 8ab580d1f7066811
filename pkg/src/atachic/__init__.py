"""Boundary feedback for two counterconvecting transport PDEs coupled to zero-speed states."""

from .analysis import (LyapunovParams, functional_R, in_subspace_S, lyapunov_constants,
                       lyapunov_value, ode_counterexample, operator_P, subspace_feedback,
                       w_transform)
from .kernels import KernelSet, kernel_residual, solve_direct_kernels
from .model import (ConfigError, Grid, PlantConfig, SimplifiedConfig, StateSnapshot,
                    initial_condition, example_plant, validate_config)
from .simulator import Trajectory, simulate, simulate_simplified_exact, simulate_simplified_fd
from .transforms import (InverseKernelSet, control_law, forward_transform, invert_kernels,
                         inverse_transform)

__version__ = "0.1.0"
