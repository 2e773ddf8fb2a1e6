"""Manifest ingestion: LiDAR fusion, box-driven decomposition, and Gaussian
initialization into a trainable SceneGraph, plus supervised sample loading."""

from __future__ import annotations

import logging

import numpy as np
import torch

from ..errors import InvalidInputError
from ..imageio import read_label_png, read_mask_png, read_pfm, read_png
from ..scene import EGO_VIEW, DynamicObject, PoseTrack, SceneGraph, strip_ego_box
from ..training.samples import FrameSample
from ..transforms import axis_angle_to_quat
from .boxes import BoxTrack, points_in_box
from .manifest import SceneManifest
from .pointcloud import (
    KNN_K,
    PointCloud,
    aggregate_object_points,
    fuse_lidar,
    init_gaussians_from_points,
    load_points_ply,
    voxel_downsample,
)

log = logging.getLogger(__name__)


def _yaw_quat(yaw: float) -> torch.Tensor:
    return axis_angle_to_quat(torch.tensor([0.0, 0.0, float(yaw)]))


def pose_track_from_boxes(track: BoxTrack, dtype=torch.float32) -> PoseTrack:
    rotations = torch.stack([_yaw_quat(y) for y in track.yaws]).to(dtype)
    translations = torch.as_tensor(track.centers, dtype=dtype)
    return PoseTrack(track.first_frame, rotations, translations)


def load_frame_clouds(manifest: SceneManifest) -> dict[int, np.ndarray]:
    """World-frame LiDAR points per frame (all sensors fused, no downsample)."""
    per_frame: dict[int, list[np.ndarray]] = {}
    for sweep in manifest.lidar:
        cloud = load_points_ply(sweep.path).transformed(sweep.sensor_to_world)
        per_frame.setdefault(sweep.frame, []).append(cloud.points)
    return {f: np.concatenate(chunks, axis=0) for f, chunks in per_frame.items()}


def build_scene(manifest: SceneManifest, sh_degree: int = 1, dtype=torch.float32) -> SceneGraph:
    """Decompose fused LiDAR into background + per-object Gaussians.

    The ego box (infrastructure annotations include it) is removed from the
    track set; points inside any remaining box seed that object's canonical
    Gaussians, everything else seeds the background.
    """
    tracks = dict(manifest.tracks)
    if manifest.ego_id:
        tracks = strip_ego_box(tracks, manifest.ego_id)

    frame_clouds = load_frame_clouds(manifest)
    if not frame_clouds:
        raise InvalidInputError("build_scene: manifest has no LiDAR sweeps")

    k = manifest.semantic_classes
    objects = []
    for obj_id, track in tracks.items():
        canonical = aggregate_object_points(frame_clouds, track)
        canonical = voxel_downsample(canonical)
        if len(canonical) < KNN_K + 1:
            log.warning("object '%s' has too few LiDAR points (%d); skipped", obj_id, len(canonical))
            continue
        gauss = init_gaussians_from_points(canonical, "object", sh_degree, k, dtype)
        objects.append(
            DynamicObject(
                obj_id,
                gauss,
                track.size,
                pose_track_from_boxes(track, dtype),
                validate_extent=False,
            )
        )

    bg_chunks = []
    for f, pts in sorted(frame_clouds.items()):
        outside = np.ones(len(pts), dtype=bool)
        for track in tracks.values():
            if track.has_frame(f):
                center, yaw = track.pose(f)
                outside &= ~points_in_box(pts, center, track.size, yaw)
        bg_chunks.append(pts[outside])
    background_cloud = fuse_lidar([PointCloud(np.concatenate(bg_chunks, axis=0))], [np.eye(4)])
    background = init_gaussians_from_points(background_cloud, "background", sh_degree, k, dtype)

    ego_masks = None
    ego_layers = manifest.layers.get(EGO_VIEW, {})
    if "ego_mask" in ego_layers:
        ego_masks = [read_mask_png(p) for p in ego_layers["ego_mask"]]

    return SceneGraph(
        background,
        objects,
        n_frames=manifest.n_frames,
        rigs=manifest.cameras,
        ego_masks=ego_masks,
    )


def load_samples(manifest: SceneManifest) -> list[FrameSample]:
    """Every supervised (view, frame) sample declared by the manifest."""
    samples = []
    for view, image_paths in manifest.images.items():
        layers = manifest.layers.get(view, {})
        for f in range(manifest.n_frames):
            depth = valid = normal = sky = sem = ego_mask = None
            if "depth" in layers:
                depth = read_pfm(layers["depth"][f])
                valid = np.isfinite(depth) & (depth > 0)
            if "normal" in layers:
                normal = read_pfm(layers["normal"][f])
            if "sky" in layers:
                sky = read_mask_png(layers["sky"][f])
            if "semantic" in layers:
                sem = read_label_png(layers["semantic"][f])
            if "ego_mask" in layers:
                ego_mask = read_mask_png(layers["ego_mask"][f])
            samples.append(
                FrameSample(
                    view=view,
                    frame=f,
                    image=read_png(image_paths[f]),
                    lidar_depth=depth,
                    depth_valid=valid,
                    normal=normal,
                    sky_mask=sky,
                    semantic_labels=sem,
                    ego_mask=ego_mask,
                )
            )
    return samples
