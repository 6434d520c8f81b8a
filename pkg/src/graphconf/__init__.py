"""Conformal prediction sets for graph-valued outputs.

Nonconformity scores are Fused Gromov-Wasserstein discrepancies between a
predicted graph and candidate graphs, so sets do not depend on node order.
"""

from .conformal import (
    CalibrationRecord,
    PredictionSet,
    calibrate_cp,
    conformal_quantile,
    coverage_bound_under_incomplete_library,
    predict_set,
)
from .evaluation import (
    EvalSummary,
    empirical_coverage,
    empty_rate,
    misalignment_lower_bound,
    set_size_and_reduction,
    summarize,
    top_k_star,
)
from .graph import (
    CostTransform,
    Graph,
    StructureKind,
    TransformKind,
    apply_permutation,
    apply_transform,
    color_histogram,
    structure_cost,
    validate_graph,
)
from .ot import Coupling, assignment_lower_bound_check, solve_exact_ot
from .scqr import (
    QuantileRegressor,
    ScqrModel,
    TrainingConfig,
    calibrate_scqr,
    fit_quantile_regressor,
    pinball_loss,
    scqr_threshold,
)
from .zgw import (
    DistanceConfig,
    InitKind,
    SolveResult,
    fgw_objective,
    initial_coupling,
    permutation_oracle,
    score,
    solve_fgw,
)

__version__ = "0.1.0"
