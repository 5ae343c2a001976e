"""Data-enabled predictive control with quadratic regularization.

Predicts and controls unknown linear systems directly from one recorded
input/output trajectory, and certifies numerically that the ridge
regularization buys worst-case robustness against disturbances on the
data.
"""

from .controller import (
    AmbiguousInitializationError,
    ClosedLoopLog,
    DataInsufficiencyError,
    DeePCController,
    behavioral_predict,
    init_controller,
    run_closed_loop,
)
from .estimator import DeePC
from .hankel import (
    HankelPartition,
    RankCheck,
    TrajectoryData,
    build_hankel,
    numerical_rank,
    partition,
    pe_order,
    rank_condition,
)
from .plant import (
    ExcitationError,
    NoiseSpec,
    StateSpaceModel,
    UnobservableModelError,
    converter_surrogate,
    generate_excitation,
    lag,
    simulate,
)
from .qp import SingularSystemError
from .robustness import (
    MonotonicityTable,
    OracleError,
    RobustnessReport,
    min_robust_cost_oracle,
    radius_sweep,
    random_instance,
    sample_disturbances,
    verify_augmented_equivalence,
    verify_equivalence,
    worst_case_disturbance,
)
from .scenario import (
    ConfigError,
    DeePCParams,
    ScenarioConfig,
    ScenarioMetrics,
    ScenarioResult,
    build_reference,
    default_params,
    run_scenario,
    sweep,
)
from .solver import (
    AssembledProblem,
    ConstraintSet,
    DeePCWeights,
    Solution,
    assemble,
    augmented_robustness_radius,
    closed_form,
    psd_sqrt,
    robust_objective,
    robustness_radius,
    solve_qp,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguousInitializationError",
    "AssembledProblem",
    "ClosedLoopLog",
    "ConfigError",
    "ConstraintSet",
    "DataInsufficiencyError",
    "DeePC",
    "DeePCController",
    "DeePCParams",
    "DeePCWeights",
    "ExcitationError",
    "HankelPartition",
    "MonotonicityTable",
    "NoiseSpec",
    "OracleError",
    "RankCheck",
    "RobustnessReport",
    "ScenarioConfig",
    "ScenarioMetrics",
    "ScenarioResult",
    "SingularSystemError",
    "Solution",
    "StateSpaceModel",
    "TrajectoryData",
    "UnobservableModelError",
    "assemble",
    "augmented_robustness_radius",
    "behavioral_predict",
    "build_hankel",
    "build_reference",
    "closed_form",
    "converter_surrogate",
    "default_params",
    "generate_excitation",
    "init_controller",
    "lag",
    "min_robust_cost_oracle",
    "numerical_rank",
    "partition",
    "pe_order",
    "psd_sqrt",
    "radius_sweep",
    "random_instance",
    "rank_condition",
    "robust_objective",
    "robustness_radius",
    "run_closed_loop",
    "run_scenario",
    "sample_disturbances",
    "simulate",
    "solve_qp",
    "sweep",
    "verify_augmented_equivalence",
    "verify_equivalence",
    "worst_case_disturbance",
]
