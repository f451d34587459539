"""Measurement-direct next-best-view planning on a pointcloud density
representation, with a simulated depth sensor and benchmark harness."""

from .classify import ClassificationDelta, brute_force_partition, classify_update, demote_frontier
from .cloud import ObservedCloud, PointClass, load_cloud_ply
from .geometry import Aabb, View, fibonacci_sphere, k_nearest, rodrigues
from .harness import CoverageTracker, ExperimentConfig, coverage, run_experiment, run_trial
from .mesh import MeshLoadError, SceneMesh, load_mesh, make_box, make_icosphere, make_rect, save_mesh_ply
from .params import ConfigError, ObservationParams, SensorIntrinsics, derive_params
from .planner import (
    ObservationResult,
    PlannerState,
    SafetyCaps,
    adjust_view,
    propose_view,
    propose_views,
    refine_views,
    run,
    select_nbv,
    update_graph,
)
from .sensor import SimSensor, ray_directions
from .surface import DegenerateGeometryError, SurfaceFrame, direct_normal, estimate_surface
from .visibility import (
    SphericalCapSolution,
    is_occluded,
    maximin_direction_oracle,
    optimise_view,
    solve_min_cap,
    visibility_offset,
)

__all__ = [
    "Aabb",
    "ClassificationDelta",
    "ConfigError",
    "CoverageTracker",
    "DegenerateGeometryError",
    "ExperimentConfig",
    "MeshLoadError",
    "ObservationParams",
    "ObservationResult",
    "ObservedCloud",
    "PlannerState",
    "PointClass",
    "SafetyCaps",
    "SceneMesh",
    "SensorIntrinsics",
    "SimSensor",
    "SphericalCapSolution",
    "SurfaceFrame",
    "View",
    "adjust_view",
    "brute_force_partition",
    "classify_update",
    "coverage",
    "demote_frontier",
    "derive_params",
    "direct_normal",
    "estimate_surface",
    "fibonacci_sphere",
    "is_occluded",
    "k_nearest",
    "load_cloud_ply",
    "load_mesh",
    "make_box",
    "make_icosphere",
    "make_rect",
    "maximin_direction_oracle",
    "optimise_view",
    "propose_view",
    "propose_views",
    "ray_directions",
    "refine_views",
    "rodrigues",
    "run",
    "run_experiment",
    "run_trial",
    "save_mesh_ply",
    "select_nbv",
    "solve_min_cap",
    "update_graph",
    "visibility_offset",
]
