"""Pinhole camera with a rigid world-to-camera transform.

Camera frame follows the OpenCV convention: +x right, +y down, +z forward.
Pixel (u, v) centers sit at integer coordinates; u = cx + fx·x/z.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import Tensor

from .errors import InvalidInputError


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_cam: Tensor = field(default_factory=lambda: torch.eye(4))
    near: float = 0.05
    far: float = 1000.0

    def __post_init__(self):
        self.world_to_cam = torch.as_tensor(self.world_to_cam, dtype=torch.float64)
        if self.world_to_cam.shape != (4, 4):
            raise InvalidInputError("Camera: world_to_cam must be 4x4")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError("Camera: focal lengths must be positive")
        if not (0 < self.near < self.far):
            raise InvalidInputError("Camera: need 0 < near < far")
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError("Camera: zero-area image")

    def rotation(self, dtype=torch.float64) -> Tensor:
        return self.world_to_cam[:3, :3].to(dtype)

    def translation(self, dtype=torch.float64) -> Tensor:
        return self.world_to_cam[:3, 3].to(dtype)

    def center(self, dtype=torch.float64) -> Tensor:
        """Camera center in world coordinates."""
        R = self.world_to_cam[:3, :3]
        t = self.world_to_cam[:3, 3]
        return (-R.transpose(0, 1) @ t).to(dtype)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "world_to_cam": self.world_to_cam.tolist(),
            "near": self.near,
            "far": self.far,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
            world_to_cam=torch.tensor(d["world_to_cam"], dtype=torch.float64),
            near=float(d.get("near", 0.05)),
            far=float(d.get("far", 1000.0)),
        )


def look_at(eye, target, up=(0.0, 0.0, 1.0), **intrinsics) -> Camera:
    """Build a Camera at ``eye`` looking toward ``target``.

    ``up`` is the world up direction; the camera's +y ends up pointing
    downward in world space per the OpenCV convention.
    """
    eye_t = torch.as_tensor(eye, dtype=torch.float64)
    fwd = torch.as_tensor(target, dtype=torch.float64) - eye_t
    fwd = fwd / fwd.norm()
    upw = torch.as_tensor(up, dtype=torch.float64)
    right = torch.linalg.cross(fwd, upw)
    if right.norm() < 1e-9:
        raise InvalidInputError("look_at: view direction parallel to up")
    right = right / right.norm()
    down = torch.linalg.cross(fwd, right)
    R = torch.stack([right, down, fwd], dim=0)  # world -> camera rows
    w2c = torch.eye(4, dtype=torch.float64)
    w2c[:3, :3] = R
    w2c[:3, 3] = -R @ eye_t
    return Camera(world_to_cam=w2c, **intrinsics)
