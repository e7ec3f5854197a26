"""Butterfly algorithm for sparse Fourier transforms on curves and surfaces."""

from .butterfly import (
    LevelState,
    StorageMonitor,
    TransformPlan,
    final_eval,
    leaf_init,
    plan,
    sweep_level,
    transform,
    upward_sweep,
)
from .geometry import (
    PRESETS,
    FarFieldProblem,
    GeometrySpec,
    PointSet,
    attach_random_charges,
    farfield_adapter,
    farfield_direct,
    load_obj_surface,
    sample_curve_2d,
    sample_surface_3d,
)
from .lowrank_core import (
    assemble_operators,
    cartesian_grid,
    evaluate_from_charges,
    kernel_eval,
    solve_equivalent_charges,
    apply_child_to_parent,
    taylor_rank_bound,
)
from .oracle import direct_transform, estimate_direct_time, estimate_error
from .spatial_tree import AdaptiveTree, BoxId, boxes_at_level, build_tree, children, parent

__version__ = "0.1.0"
