"""3D/2D annotation export in a KITTI-style per-frame text layout.

Per live object, per view, per frame: the 3D box is expressed in the view's
camera frame, the 2D box comes from projecting the 8 corners (clipped against
the near plane), truncation is the fraction of the projected box area lost to
image clamping, and occlusion is 1 − box-surface visibility from
:mod:`corner_cases`. Objects fully behind the camera, or whose projection
misses the image entirely, produce no record for that view.

Label line layout (one file per frame per view):
    type truncation occlusion alpha x1 y1 x2 y2 h w l x y z rotation_y
with location = box bottom-center in camera coordinates (x right, y down,
z forward) and rotation_y the heading angle about the camera y axis.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..camera import Camera
from ..scene import SceneGraph
from .corner_cases import _frame_boxes, box_surface_points, visibility_in_view, yaw_rotation

_BOX_EDGES = [
    (0, 1), (1, 3), (3, 2), (2, 0),
    (4, 5), (5, 7), (7, 6), (6, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
]


@dataclass
class AnnotationRecord:
    frame: int
    view: str
    object_id: str
    center_cam: np.ndarray  # (3,) box center, camera frame
    size: tuple[float, float, float]  # (l, w, h)
    rotation_y: float
    box2d: tuple[float, float, float, float]  # clamped to image bounds
    truncation: float
    occlusion: float

    def kitti_line(self, label: str = "Car") -> str:
        l, w, h = self.size
        bottom = self.center_cam + np.array([0.0, h / 2.0, 0.0])
        theta = math.atan2(self.center_cam[0], self.center_cam[2])
        alpha = _wrap_angle(self.rotation_y - theta)
        x1, y1, x2, y2 = self.box2d
        return (
            f"{label} {self.truncation:.2f} {self.occlusion:.2f} {alpha:.2f} "
            f"{x1:.2f} {y1:.2f} {x2:.2f} {y2:.2f} "
            f"{h:.2f} {w:.2f} {l:.2f} "
            f"{bottom[0]:.2f} {bottom[1]:.2f} {bottom[2]:.2f} {self.rotation_y:.2f}"
        )


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def box_corners_world(center, size, yaw: float) -> np.ndarray:
    """(8, 3) corners; index bit pattern (x sign, y sign, z sign)."""
    l, w, h = size
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64)
    local = signs * np.array([l / 2.0, w / 2.0, h / 2.0])
    return local @ yaw_rotation(yaw).T + np.asarray(center, dtype=np.float64)


def project_box(corners_world: np.ndarray, cam: Camera) -> Optional[tuple[float, float, float, float]]:
    """Full (unclamped) 2D bounds of a 3D box, clipped at the near plane.

    Returns None when every corner is behind the near plane.
    """
    R = cam.rotation().numpy()
    t = cam.translation().numpy()
    p = corners_world @ R.T + t
    front = p[:, 2] >= cam.near
    if not front.any():
        return None
    points = [p[front]]
    for i, j in _BOX_EDGES:
        zi, zj = p[i, 2], p[j, 2]
        if (zi >= cam.near) != (zj >= cam.near):
            s = (cam.near - zi) / (zj - zi)
            points.append((p[i] + s * (p[j] - p[i]))[None, :])
    pts = np.concatenate(points, axis=0)
    u = cam.cx + cam.fx * pts[:, 0] / pts[:, 2]
    v = cam.cy + cam.fy * pts[:, 1] / pts[:, 2]
    return float(u.min()), float(v.min()), float(u.max()), float(v.max())


def _camera_frame_pose(center, yaw: float, cam: Camera) -> tuple[np.ndarray, float]:
    R = cam.rotation().numpy()
    t = cam.translation().numpy()
    center_cam = R @ np.asarray(center, dtype=np.float64) + t
    heading_world = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    h = R @ heading_world
    rotation_y = math.atan2(-h[2], h[0])
    return center_cam, rotation_y


def export_annotations(scene: SceneGraph, frames, occlusion_grid: int = 5) -> list[AnnotationRecord]:
    """Annotation records for every live object, view, and frame."""
    records: list[AnnotationRecord] = []
    for frame in frames:
        boxes = _frame_boxes(scene, frame)
        for view, cams in scene.rigs.items():
            cam = cams[frame]
            for obj_id, (center, size, yaw) in boxes.items():
                corners = box_corners_world(center, size, yaw)
                full = project_box(corners, cam)
                if full is None:
                    continue
                x1, y1, x2, y2 = full
                cx1 = min(max(x1, 0.0), cam.width - 1.0)
                cy1 = min(max(y1, 0.0), cam.height - 1.0)
                cx2 = min(max(x2, 0.0), cam.width - 1.0)
                cy2 = min(max(y2, 0.0), cam.height - 1.0)
                full_area = max(x2 - x1, 0.0) * max(y2 - y1, 0.0)
                clamped_area = max(cx2 - cx1, 0.0) * max(cy2 - cy1, 0.0)
                if full_area <= 0 or clamped_area <= 0:
                    continue
                truncation = min(max(1.0 - clamped_area / full_area, 0.0), 1.0)

                samples = box_surface_points(center, size, yaw, occlusion_grid)
                others = [(k, *v) for k, v in boxes.items() if k != obj_id]
                visibility, _ = visibility_in_view(samples, cam, others)
                occlusion = min(max(1.0 - visibility, 0.0), 1.0)

                center_cam, rotation_y = _camera_frame_pose(center, yaw, cam)
                records.append(
                    AnnotationRecord(
                        frame=frame,
                        view=view,
                        object_id=obj_id,
                        center_cam=center_cam,
                        size=(float(size[0]), float(size[1]), float(size[2])),
                        rotation_y=rotation_y,
                        box2d=(cx1, cy1, cx2, cy2),
                        truncation=truncation,
                        occlusion=occlusion,
                    )
                )
    return records


def write_kitti_labels(records: list[AnnotationRecord], directory: str | os.PathLike, frames=None) -> list[Path]:
    """One label file per (view, frame) under <dir>/<view>/label/."""
    root = Path(directory)
    by_key: dict[tuple[str, int], list[AnnotationRecord]] = {}
    for r in records:
        by_key.setdefault((r.view, r.frame), []).append(r)
    views = {r.view for r in records}
    if frames is not None:
        for view in views:
            for f in frames:
                by_key.setdefault((view, f), [])
    written = []
    for (view, frame), recs in sorted(by_key.items()):
        d = root / view / "label"
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"frame_{frame:06d}.txt"
        path.write_text("".join(r.kitti_line() + "\n" for r in recs))
        written.append(path)
    return written
