"""Discrete Wasserstein barycenters of finitely supported measures via
interchangeable sparse LP formulations."""

from .measures import (
    DiscreteMeasure,
    GridSpec,
    InvariantError,
    ParseError,
    Problem,
    WeightError,
    load_problem,
    uniform_weights,
    validate_measure,
    validate_problem,
)
from .support import (
    Combination,
    CombinationBlowupError,
    GridRegimeError,
    HybridSplit,
    SupportAtlas,
    atlas_from_json,
    atlas_to_json,
    build_atlas_exact,
    build_atlas_grid,
    combination_count,
    count_dice,
    enumerate_combinations,
    hybrid_split,
    problem_digest,
    weighted_mean,
)
from .models import (
    FormulationError,
    LpModel,
    SizePrediction,
    build_general,
    build_hybrid,
    build_original,
    build_reduced,
    build_transportation,
    cost_fixed,
    predict_sizes,
    variable_reduction,
)
from .solver import (
    BarycenterSolution,
    ExtractionError,
    LpSolution,
    VerificationReport,
    export_mps,
    extract_barycenter,
    solution_json,
    solve,
    total_cost,
    verify_solution,
)

__version__ = "0.1.0"
