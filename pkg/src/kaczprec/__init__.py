"""Kaczmarz-type iterative precoding for very large arrays with per-user visibility."""

from .assembly import SubarrayChannel, assemble_dense, assemble_vr
from .channel import (
    ArrayConfig,
    ChannelMatrix,
    PathSpec,
    UserSpec,
    VisibilityRegion,
    antenna_index,
    antenna_positions,
    apply_visibility,
    build_channel_matrix,
    distance_profile,
    load_channel,
    power_control,
    random_channel,
    sample_users,
    sample_visibility,
    save_channel,
    stationary_channel,
    steering_vector,
)
from .metrics import (
    ConvergenceBound,
    FlopCounter,
    RunTrace,
    VrStats,
    COSTED_SCHEMES,
    analytic_flops,
    contraction_diagnostics,
    estimate_rate_bound,
    nmse,
    spectral_efficiency,
)
from .rzf import Precoder, apply_auxiliary, auxiliary_matrix, mrc_precoder, rzf_precoder
from .solvers import (
    SCHEMES,
    AggregationWeights,
    AugmentedSystem,
    InstanceRun,
    PrecodingRun,
    SelectionStrategy,
    SolverState,
    StoppingRule,
    aggregation_weights,
    ahk_step,
    augmented_iterate,
    augmented_target,
    orthogonal_block_step,
    residual_refresh,
    rk_step,
    run_precoding,
    select_row,
    solve,
    solve_all,
)
from .vrgraph import (
    OverlapGraph,
    UserPartition,
    build_overlap_graph,
    build_partition,
    format_partition,
    greedy_independent_set,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayConfig",
    "PathSpec",
    "UserSpec",
    "VisibilityRegion",
    "ChannelMatrix",
    "antenna_index",
    "antenna_positions",
    "distance_profile",
    "steering_vector",
    "stationary_channel",
    "apply_visibility",
    "sample_visibility",
    "sample_users",
    "build_channel_matrix",
    "random_channel",
    "power_control",
    "save_channel",
    "load_channel",
    "Precoder",
    "rzf_precoder",
    "mrc_precoder",
    "apply_auxiliary",
    "auxiliary_matrix",
    "OverlapGraph",
    "UserPartition",
    "build_overlap_graph",
    "greedy_independent_set",
    "build_partition",
    "format_partition",
    "AugmentedSystem",
    "InstanceRun",
    "SolverState",
    "SelectionStrategy",
    "AggregationWeights",
    "StoppingRule",
    "PrecodingRun",
    "residual_refresh",
    "rk_step",
    "select_row",
    "aggregation_weights",
    "ahk_step",
    "orthogonal_block_step",
    "augmented_iterate",
    "augmented_target",
    "solve",
    "solve_all",
    "run_precoding",
    "SCHEMES",
    "SubarrayChannel",
    "assemble_dense",
    "assemble_vr",
    "FlopCounter",
    "VrStats",
    "RunTrace",
    "ConvergenceBound",
    "nmse",
    "spectral_efficiency",
    "COSTED_SCHEMES",
    "analytic_flops",
    "estimate_rate_bound",
    "contraction_diagnostics",
]
