"""Time-varying SEIR parameter learning with Pontryagin-style optimal control.

The forward model is a positivity-preserving explicit-implicit scheme, the
co-state runs backward with jump conditions at observation times, and the
parameters are updated pointwise by a projected proximal step on the
Hamiltonian. Windows of data are fitted one after another.
"""
from .adjoint import CostateTrajectory, backward_step, jump_update, solve_backward, terminal_costate
from .control import (
    ConfigurationError,
    ControlProblem,
    DivergenceError,
    FitResult,
    LossWeights,
    UnreachableTargetError,
    WindowError,
    default_tau,
    fit,
    gradient_constant_theta,
    loss,
    ppa_update,
    scheduled_control,
    window_problems,
    windowed_fit,
)
from .data import (
    DataFormatError,
    ObservedSeries,
    RegionNotFound,
    TargetPoint,
    initial_state,
    load_populations,
    mu_init,
    parse_csse,
    sample_observations,
    synth_twin,
)
from .forward import SolverGrid, StateTrajectory, forward_step, solve_forward
from .model import (
    DEFAULT_BOUNDS,
    CostateVec,
    DemographyParams,
    DomainError,
    FractionState,
    ParamBounds,
    ParamVec,
    StateVec,
    fraction_rhs,
    hamiltonian,
    hamiltonian_gradient,
    jacobian_params,
    jacobian_state,
    r0,
    seir_rhs,
    sigma,
    simulate_fractions,
)

__version__ = "0.1.0"
