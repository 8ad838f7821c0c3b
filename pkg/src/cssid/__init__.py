"""Constrained least-squares identification of linear state-space models.

Identifies discrete-time models whose free-run state trajectories satisfy
known (or uncertain) linear equality constraints, such as mass conservation
in compartmental systems.  The state constraint is mapped to a linear
constraint on the vectorized parameters, after which batch, relaxed and
recursive constrained least-squares estimators apply.
"""

from .constraint_map import (
    CompatibilityReport,
    MatrixParamConstraint,
    StateConstraint,
    VectorizedConstraint,
    build_matrix_constraint,
    check_compatibility,
    vec_kron_identity_check,
    vectorize_constraint,
)
from .estimators import (
    ParamEstimate,
    RecursiveRunResult,
    RecursiveState,
    RegressionData,
    build_regression,
    cls_batch,
    constraint_offset,
    ls_batch,
    null_space_projector,
    rcls_relaxed,
    rcls_run,
    rls_init_constrained,
    rls_step,
    rwcls_run,
    rwcls_step,
    rwls_run,
    rwls_step,
    unvectorize,
)
from .exceptions import ConstraintSingularError, DimensionError, RankDeficiencyError
from .harness import (
    BiasStudy,
    MethodSpec,
    MonteCarloConfig,
    RmseSummary,
    bias_study,
    fit_method,
    free_run,
    monte_carlo,
    monte_carlo_tv,
    rmse,
)
from .linalg import unvec, vec
from .simulator import (
    InputSpec,
    NoiseSpec,
    ScenarioSpec,
    StateSpaceModel,
    Trajectory,
    load_scenario,
    save_scenario,
    scenario_compartmental_ti,
    scenario_compartmental_tv,
    scenario_forest,
    simulate,
    simulate_scenario,
    with_seed,
)

__version__ = "0.1.0"

__all__ = [
    "BiasStudy",
    "CompatibilityReport",
    "ConstraintSingularError",
    "DimensionError",
    "InputSpec",
    "MatrixParamConstraint",
    "MethodSpec",
    "MonteCarloConfig",
    "NoiseSpec",
    "ParamEstimate",
    "RankDeficiencyError",
    "RecursiveRunResult",
    "RecursiveState",
    "RegressionData",
    "RmseSummary",
    "ScenarioSpec",
    "StateConstraint",
    "StateSpaceModel",
    "Trajectory",
    "VectorizedConstraint",
    "bias_study",
    "build_matrix_constraint",
    "build_regression",
    "check_compatibility",
    "cls_batch",
    "constraint_offset",
    "fit_method",
    "free_run",
    "load_scenario",
    "ls_batch",
    "monte_carlo",
    "monte_carlo_tv",
    "null_space_projector",
    "rcls_relaxed",
    "rcls_run",
    "rls_init_constrained",
    "rls_step",
    "rmse",
    "rwcls_run",
    "rwcls_step",
    "rwls_run",
    "rwls_step",
    "save_scenario",
    "scenario_compartmental_ti",
    "scenario_compartmental_tv",
    "scenario_forest",
    "simulate",
    "simulate_scenario",
    "unvec",
    "unvectorize",
    "vec",
    "vec_kron_identity_check",
    "vectorize_constraint",
    "with_seed",
]
