from .lanes import Lane, LaneGraph, load_vector_map, select_intersection_lanes
from .llm_client import LlmFallback, llm_trajectory_client
from .trajectory import (
    TrajectoryTrack,
    build_tracking_boxes,
    generate_trajectory_rule,
    interpolate_track,
    obb_overlap_2d,
)

__all__ = [
    "Lane",
    "LaneGraph",
    "load_vector_map",
    "select_intersection_lanes",
    "LlmFallback",
    "llm_trajectory_client",
    "TrajectoryTrack",
    "build_tracking_boxes",
    "generate_trajectory_rule",
    "interpolate_track",
    "obb_overlap_2d",
]
