"""Per-frame 7-DoF annotation box tracks (ground-truth or generated)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError


@dataclass
class BoxTrack:
    """An object's oriented box over a contiguous frame range.

    ``centers`` are box centers (not ground points) in world meters.
    """

    object_id: str
    size: tuple[float, float, float]  # (l, w, h)
    first_frame: int
    centers: np.ndarray  # (F, 3)
    yaws: np.ndarray  # (F,)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, 3)
        self.yaws = np.asarray(self.yaws, dtype=np.float64).reshape(-1)
        if len(self.centers) != len(self.yaws):
            raise InvalidInputError("BoxTrack: centers and yaws disagree on length")
        if any(s <= 0 for s in self.size):
            raise InvalidInputError("BoxTrack: box size must be positive")

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def last_frame(self) -> int:
        return self.first_frame + len(self) - 1

    def has_frame(self, frame: int) -> bool:
        return self.first_frame <= frame <= self.last_frame

    def pose(self, frame: int) -> tuple[np.ndarray, float]:
        if not self.has_frame(frame):
            raise InvalidInputError(f"BoxTrack '{self.object_id}': no frame {frame}")
        i = frame - self.first_frame
        return self.centers[i], float(self.yaws[i])

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "size": list(self.size),
            "first_frame": self.first_frame,
            "centers": self.centers.tolist(),
            "yaws": self.yaws.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoxTrack":
        return cls(
            object_id=str(d["object_id"]),
            size=tuple(float(v) for v in d["size"]),
            first_frame=int(d["first_frame"]),
            centers=np.asarray(d["centers"]),
            yaws=np.asarray(d["yaws"]),
        )


def _yaw_rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def world_to_box(points: np.ndarray, center, yaw: float) -> np.ndarray:
    """Map world points into the box's canonical frame (center at origin)."""
    return (np.asarray(points, dtype=np.float64) - np.asarray(center, dtype=np.float64)) @ _yaw_rotation(yaw)


def points_in_box(points: np.ndarray, center, size, yaw: float, margin: float = 0.0) -> np.ndarray:
    """Boolean mask of points inside the oriented box (optionally inflated)."""
    local = world_to_box(points, center, yaw)
    half = np.asarray(size, dtype=np.float64) / 2.0 + margin
    return (np.abs(local) <= half).all(axis=1)
