"""Numerical laboratory for the stochastic Burgers equation on (0, pi).

The equation is driven by white-in-time noise acting through two fixed
spatial profiles supported in a subinterval, plus an optional deterministic
force.  The package provides the sine-spectral discretization, the time
steppers, empirical-measure statistics (dual-Lipschitz distance estimation),
experiment protocols (contraction, regularization, energy balance, mixing,
recurrence), a two-mode control optimizer, and a batch CLI that writes JSON
reports, CSV series, and figures.
"""

from burgers_lab.spectral import (
    GridState,
    NormTag,
    SpectralState,
    from_grid,
    heat_operator_norm,
    heat_propagate,
    norm,
    theta_exponent,
    to_grid,
)
from burgers_lab.forcing import (
    ForcingBasis,
    NoisePath,
    StochasticConvolution,
    build_basis,
    convolution_step,
    sample_noise,
)
from burgers_lab.dynamics import (
    CFLViolationError,
    ControlSchedule,
    SimConfig,
    Trajectory,
    comparison_check,
    nonlinear_term,
    select_supersolution_m,
    simulate,
    simulate_controlled,
    steady_state,
    step_stochastic,
    supersolution_value,
)
from burgers_lab.measures import (
    Ensemble,
    TargetSet,
    TestFunctionFamily,
    dual_lipschitz_distance,
    in_target_set,
    make_ensemble,
    moment_report,
)

__version__ = "0.1.0"

__all__ = [
    "SpectralState",
    "GridState",
    "NormTag",
    "to_grid",
    "from_grid",
    "norm",
    "theta_exponent",
    "heat_propagate",
    "heat_operator_norm",
    "ForcingBasis",
    "NoisePath",
    "StochasticConvolution",
    "build_basis",
    "sample_noise",
    "convolution_step",
    "SimConfig",
    "Trajectory",
    "ControlSchedule",
    "CFLViolationError",
    "nonlinear_term",
    "step_stochastic",
    "simulate",
    "simulate_controlled",
    "steady_state",
    "supersolution_value",
    "comparison_check",
    "select_supersolution_m",
    "Ensemble",
    "TestFunctionFamily",
    "TargetSet",
    "make_ensemble",
    "dual_lipschitz_distance",
    "moment_report",
    "in_target_set",
    "__version__",
]
