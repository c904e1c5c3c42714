"""Structure-preserving simulation of the stochastic Cahn-Hilliard equation."""

from .config import SolverConfig
from .diagnostics import (
    EnergyReport,
    ErrorSeries,
    EventFlags,
    LevelSet,
    energy,
    event_flags,
    hausdorff,
    stopping_index,
    tanh_profile,
    zero_level_set,
)
from .estimator import StochasticCahnHilliard
from .exceptions import ConfigError, ConvexityViolated, EmptyLevelSet, NewtonDiverged, NotMeanZero
from .harness import (
    EnsembleStats,
    RunOptions,
    TrajectoryRecord,
    convergence_study_tau,
    limit_study_epsilon,
    regularity_study_noise,
    run_ensemble,
    run_trajectory,
)
from .noise import NoiseIncrement, NoiseMesh, make_noise_mesh, mean_correct, moment_stats, sample_increment
from .spectral import Field, Grid, make_grid
from .stepper import (
    StepperState,
    chemical_potential,
    convolution_direct,
    F_potential,
    f_nonlin,
    solve_implicit,
    step_deterministic,
    step_full,
    step_linear,
    step_random,
)

__version__ = "0.1.0"
