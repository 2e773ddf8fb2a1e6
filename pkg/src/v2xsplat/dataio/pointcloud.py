"""LiDAR point-cloud fusion, per-object aggregation, and Gaussian seeding."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from scipy.spatial import cKDTree

from ..errors import InvalidInputError
from ..gaussians import GaussianSet
from ..sh import num_coeffs, rgb_to_sh_dc
from .boxes import BoxTrack, world_to_box, points_in_box

VOXEL_SIZE = 0.1  # meters
KNN_K = 3
INIT_OPACITY_LOGIT = 0.1  # stored pre-sigmoid value


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3)
    intensity: Optional[np.ndarray] = None  # (N,)
    colors: Optional[np.ndarray] = None  # (N, 3) in [0, 1]

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(self.points).all():
            raise InvalidInputError("PointCloud: non-finite coordinates")
        for name in ("intensity", "colors"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=np.float64)
                if v.shape[0] != len(self.points):
                    raise InvalidInputError(f"PointCloud: {name} length mismatch")
                setattr(self, name, v)

    def __len__(self) -> int:
        return len(self.points)

    def select(self, mask) -> "PointCloud":
        return PointCloud(
            self.points[mask],
            None if self.intensity is None else self.intensity[mask],
            None if self.colors is None else self.colors[mask],
        )

    def transformed(self, sensor_to_world: np.ndarray) -> "PointCloud":
        m = np.asarray(sensor_to_world, dtype=np.float64)
        if m.shape != (4, 4):
            raise InvalidInputError("PointCloud: transform must be 4x4")
        pts = self.points @ m[:3, :3].T + m[:3, 3]
        return PointCloud(pts, self.intensity, self.colors)


def voxel_downsample(cloud: PointCloud, voxel: float = VOXEL_SIZE) -> PointCloud:
    """Keep the first point (in input order) of every occupied voxel."""
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / voxel).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return cloud.select(np.sort(first))


def fuse_lidar(
    clouds: Sequence[PointCloud],
    transforms: Sequence[np.ndarray],
    voxel: float = VOXEL_SIZE,
) -> PointCloud:
    """Rigidly map per-sensor clouds into world space, concatenate in input
    order, and voxel-downsample (first-in-voxel-wins under that order)."""
    if len(clouds) != len(transforms):
        raise InvalidInputError("fuse_lidar: clouds and transforms disagree")
    if not clouds:
        return PointCloud(np.zeros((0, 3)))
    world = [c.transformed(t) for c, t in zip(clouds, transforms)]
    pts = np.concatenate([c.points for c in world], axis=0)

    def _cat(attr):
        vals = [getattr(c, attr) for c in world]
        if any(v is None for v in vals):
            return None
        return np.concatenate(vals, axis=0)

    merged = PointCloud(pts, _cat("intensity"), _cat("colors"))
    return voxel_downsample(merged, voxel)


def aggregate_object_points(
    frame_points: dict[int, np.ndarray],
    track: BoxTrack,
    margin: float = 0.0,
) -> PointCloud:
    """Pool multi-frame world points into the track's canonical box frame.

    For every tracked frame with points, the points inside the box are mapped
    by the inverse box pose and accumulated; a rigidly co-moving object stacks
    into a single dense canonical cloud.
    """
    chunks = []
    for frame, pts in sorted(frame_points.items()):
        if not track.has_frame(frame) or len(pts) == 0:
            continue
        center, yaw = track.pose(frame)
        mask = points_in_box(pts, center, track.size, yaw, margin=margin)
        if mask.any():
            chunks.append(world_to_box(np.asarray(pts)[mask], center, yaw))
    if not chunks:
        return PointCloud(np.zeros((0, 3)))
    return PointCloud(np.concatenate(chunks, axis=0))


def init_gaussians_from_points(
    cloud: PointCloud,
    target: str = "background",
    sh_degree: int = 1,
    semantic_classes: int = 0,
    dtype=torch.float32,
) -> GaussianSet:
    """Seed one isotropic Gaussian per point.

    Scale is the mean distance to the 3 nearest neighbors; opacity logits
    start at 0.1 (pre-sigmoid); SH DC encodes the point color, or mid-gray
    when the cloud has none. ``target`` only documents intent (background vs
    object); both use the same seeding.
    """
    if target not in ("background", "object"):
        raise InvalidInputError(f"init_gaussians_from_points: unknown target '{target}'")
    n = len(cloud)
    if n < KNN_K + 1:
        raise InvalidInputError(f"init_gaussians_from_points: need at least {KNN_K + 1} points, got {n}")

    dists, _ = cKDTree(cloud.points).query(cloud.points, k=KNN_K + 1)
    mean_nn = dists[:, 1:].mean(axis=1)  # skip self
    mean_nn = np.maximum(mean_nn, 1e-6)

    positions = torch.from_numpy(cloud.points).to(dtype)
    rotations = torch.zeros((n, 4), dtype=dtype)
    rotations[:, 0] = 1.0
    log_scales = torch.log(torch.from_numpy(mean_nn).to(dtype))[:, None].repeat(1, 3)
    opacity_logits = torch.full((n,), INIT_OPACITY_LOGIT, dtype=dtype)

    sh = torch.zeros((n, num_coeffs(sh_degree), 3), dtype=dtype)
    if cloud.colors is not None:
        sh[:, 0, :] = rgb_to_sh_dc(torch.from_numpy(cloud.colors).to(dtype))

    semantics = torch.zeros((n, semantic_classes), dtype=dtype) if semantic_classes else None
    return GaussianSet(positions, rotations, log_scales, opacity_logits, sh, semantics)


# -- plain xyz PLY I/O --------------------------------------------------------


def save_points_ply(cloud: PointCloud, path: str | os.PathLike) -> None:
    n = len(cloud)
    cols = [cloud.points.astype("<f4")]
    names = ["x", "y", "z"]
    if cloud.intensity is not None:
        cols.append(cloud.intensity.astype("<f4")[:, None])
        names.append("intensity")
    if cloud.colors is not None:
        cols.append(cloud.colors.astype("<f4"))
        names += ["red", "green", "blue"]
    data = np.concatenate(cols, axis=1)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in names]
    header += ["end_header"]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def load_points_ply(path: str | os.PathLike) -> PointCloud:
    with open(path, "rb") as f:
        raw = f.read()
    end = raw.find(b"end_header")
    if end < 0:
        raise InvalidInputError(f"{path}: not a PLY file")
    header = raw[:end].decode("ascii", errors="replace").splitlines()
    body = raw[end:]
    body = body[body.find(b"\n") + 1 :]
    count = None
    names: list[str] = []
    fmt = None
    for line in header:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element" and parts[1] == "vertex":
            count = int(parts[2])
        elif parts[0] == "property" and len(parts) == 3:
            names.append(parts[2])
    if fmt != "binary_little_endian" or count is None:
        raise InvalidInputError(f"{path}: unsupported point PLY header")
    table = np.frombuffer(body, dtype="<f4", count=count * len(names)).reshape(count, len(names))
    col = {n: i for i, n in enumerate(names)}
    missing = [k for k in ("x", "y", "z") if k not in col]
    if missing:
        raise InvalidInputError(f"{path}: missing point attributes {missing}")
    pts = table[:, [col["x"], col["y"], col["z"]]].astype(np.float64)
    intensity = table[:, col["intensity"]].astype(np.float64) if "intensity" in col else None
    colors = None
    if all(k in col for k in ("red", "green", "blue")):
        colors = table[:, [col["red"], col["green"], col["blue"]]].astype(np.float64)
    return PointCloud(pts, intensity, colors)
