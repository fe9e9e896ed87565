"""EDM-based posture positioning for multi-joint manipulators."""

from .edm_core import (
    Embedding,
    RigidTransform,
    WeightSpec,
    cmds_embed,
    double_center,
    edm_from_points,
    procrustes_align,
    project_cone,
    rank_penalty,
)
from .nedm_solver import NedmProblem, SolveResult, SolverConfig, check_eps_optimality, solve, solve_subproblem
from .posture import (
    ManipulatorScene,
    PoseEstimate,
    RangeMeasurements,
    build_G,
    cepp_localize,
    epp_localize,
    fit_vertical_plane,
    from_plane,
    project_distance,
    to_plane,
    track,
)

__version__ = "0.1.0"
