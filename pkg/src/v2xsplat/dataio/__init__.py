from .boxes import BoxTrack, points_in_box
from .manifest import SceneManifest, load_manifest
from .pointcloud import (
    PointCloud,
    aggregate_object_points,
    fuse_lidar,
    init_gaussians_from_points,
    load_points_ply,
    save_points_ply,
    voxel_downsample,
)

__all__ = [
    "BoxTrack",
    "points_in_box",
    "SceneManifest",
    "load_manifest",
    "PointCloud",
    "aggregate_object_points",
    "fuse_lidar",
    "init_gaussians_from_points",
    "load_points_ply",
    "save_points_ply",
    "voxel_downsample",
]
