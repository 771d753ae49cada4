"""Multi-vehicle trajectory optimization with controllable pairwise
interaction patterns."""

from .basis import eval_basis
from .costs import (
    CostBreakdown,
    StageMask,
    Weights,
    collision_penalty,
    effort_cost,
    kinodynamic_penalty,
    time_cost,
    topology_penalty,
    total_objective,
)
from .scenario import (
    Metrics,
    Obstacle,
    Scenario,
    ScenarioError,
    Vehicle,
    compute_metrics,
    export_trajectories,
    load_scenario,
    parse_scenario,
    render_svg,
    serialize_scenario,
)
from .solver import (
    DecisionLayout,
    OptimizationReport,
    SolverOptions,
    audit_feasibility,
    evaluate_pattern,
    initialize,
    lbfgs_minimize,
    two_stage_optimize,
)
from .topology import (
    B,
    InteractionPattern,
    KeyPointSolution,
    WindingRecord,
    classify_interaction,
    closest_approach,
    homotopy_metric,
    keypoint_sensitivities,
    metric_at_keypoint,
    winding_angle_oracle,
)
from .trajectory import (
    BoundaryState,
    FlatState,
    Trajectory,
    arc_length,
    eval,
    locate_piece,
    minco_backprop,
    minco_solve,
)
from .transforms import (
    duration_transform,
    duration_transform_grad,
    duration_transform_inverse,
)

__version__ = "0.1.0"
