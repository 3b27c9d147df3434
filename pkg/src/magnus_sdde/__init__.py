"""Magnus-type strong integrators for semilinear stochastic delay equations.

The library integrates

    dX = [A_0 X + f(t, X, X(t - tau_1), ...)] dt
         + sum_j [A_j X + g_j(t, X, X(t - tau_1), ...)] dW_j

with Euler-Maruyama, Milstein, Magnus-Euler-Maruyama and Magnus-Milstein
schemes, and ships a Monte Carlo convergence harness plus a stochastic heat
equation with delayed cooling.
"""

from .errors import (
    ConfigurationError,
    DivergenceError,
    InvalidArgumentError,
    MeshAlignmentError,
    SddeError,
    StepSizeError,
    TrajectoryLookupError,
)
from .experiments import ConvergenceReport, ExperimentConfig, fit_slope, run_convergence
from .linalg import lie_bracket, mat_exp
from .model import (
    SemilinearSdde,
    Trajectory,
    as_plain_sdde,
    bellman_intervals,
    build_mesh,
    constant_history,
    lookup,
)
from .noise import (
    WienerLattice,
    kl_basis,
    load_lattice,
    mesh_noise,
    sample_lattice,
    sample_q_wiener,
    save_lattice,
    step_noise,
    trial_seed,
)
from .presets import PRESETS, preset
from .schemes import Scheme, integrate

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ConvergenceReport",
    "DivergenceError",
    "ExperimentConfig",
    "InvalidArgumentError",
    "MeshAlignmentError",
    "PRESETS",
    "Scheme",
    "SddeError",
    "SemilinearSdde",
    "StepSizeError",
    "Trajectory",
    "TrajectoryLookupError",
    "WienerLattice",
    "as_plain_sdde",
    "bellman_intervals",
    "build_mesh",
    "constant_history",
    "fit_slope",
    "integrate",
    "kl_basis",
    "lie_bracket",
    "load_lattice",
    "lookup",
    "mat_exp",
    "mesh_noise",
    "preset",
    "run_convergence",
    "sample_lattice",
    "sample_q_wiener",
    "save_lattice",
    "step_noise",
    "trial_seed",
]
