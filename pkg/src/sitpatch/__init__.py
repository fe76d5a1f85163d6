"""Two-patch sterile insect release model.

Simulation with impulsive releases, equilibria, critical release rates and
parameter sweeps for a wild population split between a treated zone and an
inaccessible reservoir.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .continuation import (
    AuditReport,
    Branch,
    BranchPoint,
    CriticalResult,
    HeatmapGrid,
    InvalidBracketError,
    NoFoldError,
    RatioSweep,
    continue_branch,
    critical_lambda_by_fold,
    critical_lambda_by_simulation,
    diffusion_heatmap,
    monotonicity_audit,
    parameter_leq,
    ratio_sweep,
)
from .equilibria import (
    ControlledEquilibrium,
    EquilibriumSet,
    PeriodicSterileOrbit,
    WildEquilibrium,
    controlled_equilibria,
    homogeneous_critical_lambda,
    lambda_upper_bound_constant,
    lambda_upper_bound_periodic,
    mat_exp_2x2,
    sterile_constant_steady,
    sterile_conversion_constants,
    sterile_periodic_orbit,
    wild_positive_equilibrium,
)
from .integrate import (
    IntegrationError,
    IntegrationOptions,
    OutcomeKind,
    OutcomeReport,
    Trajectory,
    classify_outcome,
    classify_trajectory,
    detect_extinction,
    integrate,
)
from .model import (
    STATE_NAMES,
    DomainError,
    ModelParams,
    ParameterError,
    SystemState,
    basic_offspring_number,
    cone_flip,
    mating_fraction,
    order_leq,
    uniform_bounds,
    vector_field,
)
from .release import Constant, PeriodicImpulsive, PiecewiseConstant

__all__ = [
    "__version__",
    "AuditReport", "Branch", "BranchPoint", "CriticalResult", "HeatmapGrid", "InvalidBracketError",
    "NoFoldError", "RatioSweep", "continue_branch", "critical_lambda_by_fold", "critical_lambda_by_simulation",
    "diffusion_heatmap", "monotonicity_audit", "parameter_leq", "ratio_sweep",
    "ControlledEquilibrium", "EquilibriumSet", "PeriodicSterileOrbit", "WildEquilibrium",
    "controlled_equilibria", "homogeneous_critical_lambda", "lambda_upper_bound_constant",
    "lambda_upper_bound_periodic", "mat_exp_2x2", "sterile_constant_steady", "sterile_conversion_constants",
    "sterile_periodic_orbit", "wild_positive_equilibrium",
    "IntegrationError", "IntegrationOptions", "OutcomeKind", "OutcomeReport", "Trajectory",
    "classify_outcome", "classify_trajectory", "detect_extinction", "integrate",
    "STATE_NAMES", "DomainError", "ModelParams", "ParameterError", "SystemState", "basic_offspring_number",
    "cone_flip", "mating_fraction", "order_leq", "uniform_bounds", "vector_field",
    "Constant", "PeriodicImpulsive", "PiecewiseConstant",
]
