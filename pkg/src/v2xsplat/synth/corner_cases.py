"""Geometric occlusion analysis and corner-case flagging.

A corner case is an object the infrastructure sees but the ego camera does
not: visibility is the fraction of points sampled on the object's box surface
that fall inside a view's frustum and are not depth-blocked by any other
object's box along the camera ray. Out-of-frustum samples count as not
visible, so an object outside the ego image entirely is a candidate.
Occlusion is evaluated on boxes, not rendered pixels, so it is independent of
reconstruction quality (an ID-buffer variant is a documented extension
point).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..camera import Camera
from ..scene import EGO_VIEW, INFRA_VIEW, SceneGraph

TAU_VISIBLE = 0.5
TAU_OCCLUDED = 0.1
FACE_GRID = 5
_EPS = 1e-9


@dataclass
class CornerCase:
    frame: int
    object_id: str
    visibility_infra: float
    visibility_ego: float
    occluder_id: Optional[str]

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "object_id": self.object_id,
            "visibility_infra": self.visibility_infra,
            "visibility_ego": self.visibility_ego,
            "occluder_id": self.occluder_id,
        }


def yaw_rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def box_surface_points(center, size, yaw: float, grid: int = FACE_GRID) -> np.ndarray:
    """Deterministic grid of points on all six faces of an oriented box."""
    half = np.asarray(size, dtype=np.float64) / 2.0
    lin = np.linspace(-1.0, 1.0, grid)
    uu, vv = np.meshgrid(lin, lin, indexing="ij")
    uu, vv = uu.ravel(), vv.ravel()
    ones = np.ones_like(uu)
    faces = []
    for axis, sign in ((0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)):
        coords = [None, None, None]
        others = [a for a in range(3) if a != axis]
        coords[axis] = sign * ones
        coords[others[0]] = uu
        coords[others[1]] = vv
        faces.append(np.stack(coords, axis=1))
    local = np.concatenate(faces, axis=0) * half
    return local @ yaw_rotation(yaw).T + np.asarray(center, dtype=np.float64)


def _segment_hits_box(origin: np.ndarray, targets: np.ndarray, center, size, yaw: float) -> np.ndarray:
    """For each target point, does segment origin->target pass through the box?

    Slab test in the box frame; grazing the exact surface does not count.
    """
    R = yaw_rotation(yaw)
    half = np.asarray(size, dtype=np.float64) / 2.0
    o = (origin - np.asarray(center, dtype=np.float64)) @ R
    d = (targets - origin) @ R  # (P, 3)

    t_enter = np.zeros(len(targets))
    t_exit = np.full(len(targets), 1.0)
    inside_ok = np.ones(len(targets), dtype=bool)
    for a in range(3):
        da = d[:, a]
        parallel = np.abs(da) < _EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = (-half[a] - o[a]) / da
            t1 = (half[a] - o[a]) / da
        lo = np.minimum(t0, t1)
        hi = np.maximum(t0, t1)
        t_enter = np.where(parallel, t_enter, np.maximum(t_enter, lo))
        t_exit = np.where(parallel, t_exit, np.minimum(t_exit, hi))
        inside_ok &= np.where(parallel, np.abs(o[a]) <= half[a], True)
    hit = inside_ok & (t_enter < t_exit - _EPS) & (t_exit > _EPS) & (t_enter < 1.0 - _EPS)
    return hit


def _frame_boxes(scene: SceneGraph, frame: int) -> dict[str, tuple[np.ndarray, np.ndarray, float]]:
    boxes = {}
    for obj in scene.objects:
        if not obj.track.has_frame(frame):
            continue
        q, t = obj.track.pose_at(frame)
        R = _quat_to_np_rotmat(q)
        yaw = math.atan2(R[1, 0], R[0, 0])
        boxes[obj.id] = (t.detach().numpy().astype(np.float64), obj.size.detach().numpy().astype(np.float64), yaw)
    return boxes


def _quat_to_np_rotmat(q) -> np.ndarray:
    from ..transforms import quat_to_rotmat

    return quat_to_rotmat(q.detach()).numpy().astype(np.float64)


def visibility_in_view(
    points: np.ndarray,
    cam: Camera,
    other_boxes: list[tuple[str, np.ndarray, np.ndarray, float]],
) -> tuple[float, Optional[str]]:
    """(visible fraction, heaviest occluder id) for box-surface samples."""
    R = cam.rotation().numpy()
    t = cam.translation().numpy()
    p_cam = points @ R.T + t
    z = p_cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cam.cx + cam.fx * p_cam[:, 0] / z
        v = cam.cy + cam.fy * p_cam[:, 1] / z
    in_frustum = (z >= cam.near) & (z <= cam.far) & (u >= 0) & (u <= cam.width - 1) & (v >= 0) & (v <= cam.height - 1)

    origin = cam.center().numpy()
    blocked = np.zeros(len(points), dtype=bool)
    blocked_counts: dict[str, int] = {}
    for name, center, size, yaw in other_boxes:
        hits = _segment_hits_box(origin, points, center, size, yaw)
        blocked |= hits
        blocked_counts[name] = int(hits.sum())

    visible = in_frustum & ~blocked
    frac = float(visible.mean()) if len(points) else 0.0
    occluder = None
    if blocked_counts:
        best = max(blocked_counts.items(), key=lambda kv: kv[1])
        if best[1] > 0:
            occluder = best[0]
    return frac, occluder


def detect_corner_cases(
    scene: SceneGraph,
    frames,
    tau_vis: float = TAU_VISIBLE,
    tau_occ: float = TAU_OCCLUDED,
    ego_view: str = EGO_VIEW,
    infra_view: str = INFRA_VIEW,
    grid: int = FACE_GRID,
) -> list[CornerCase]:
    """Objects visible to the infrastructure but hidden from the ego camera."""
    cases: list[CornerCase] = []
    for frame in frames:
        boxes = _frame_boxes(scene, frame)
        for obj_id, (center, size, yaw) in boxes.items():
            samples = box_surface_points(center, size, yaw, grid)
            others = [(k, *v) for k, v in boxes.items() if k != obj_id]
            vis_infra, _ = visibility_in_view(samples, scene.rigs[infra_view][frame], others)
            vis_ego, occluder = visibility_in_view(samples, scene.rigs[ego_view][frame], others)
            if vis_infra >= tau_vis and vis_ego <= tau_occ:
                cases.append(CornerCase(frame, obj_id, vis_infra, vis_ego, occluder))
    return cases
