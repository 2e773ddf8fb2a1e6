"""Keyframe trajectory generation along lane centerlines, dense
interpolation, and 7-DoF tracking-box construction.

Keyframes follow the (t, p) convention: frame indices are multiples of the
keyframe stride (10 frames at the 10 Hz capture rate) with 3D positions on
the lane surface. Yaw is completed from the velocity direction since only
positions are exchanged with trajectory generators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import InvalidInputError, TrajectoryGenerationError
from .lanes import Lane, LaneGraph

FRAME_RATE_HZ = 10.0
KEYFRAME_STRIDE = 10
SPEED_RANGE = (3.0, 10.0)  # m/s
MAX_ATTEMPTS = 20
YAW_HOLD_SPEED = 0.1  # m/s, below which yaw is held


Keyframe = tuple[int, np.ndarray]


@dataclass
class TrajectoryTrack:
    """Sparse keyframes plus the dense per-frame track derived from them."""

    object_id: str
    keyframes: list[Keyframe]
    size: tuple[float, float, float]  # (l, w, h) meters
    frames: np.ndarray = field(init=False)  # (F,) ints
    positions: np.ndarray = field(init=False)  # (F, 3)
    yaws: np.ndarray = field(init=False)  # (F,)

    def __post_init__(self):
        self.keyframes = [(int(t), np.asarray(p, dtype=np.float64).reshape(3)) for t, p in self.keyframes]
        if any(s <= 0 for s in self.size):
            raise InvalidInputError("TrajectoryTrack: box size must be positive")
        self.frames, self.positions, self.yaws = interpolate_track(self.keyframes)

    @property
    def first_frame(self) -> int:
        return int(self.frames[0])

    @property
    def last_frame(self) -> int:
        return int(self.frames[-1])

    def pose_at(self, frame: int) -> tuple[np.ndarray, float]:
        if not (self.first_frame <= frame <= self.last_frame):
            raise InvalidInputError(f"track '{self.object_id}': no pose at frame {frame}")
        i = frame - self.first_frame
        return self.positions[i], float(self.yaws[i])


def interpolate_track(keyframes: Sequence[Keyframe], frame_step: int = 1):
    """Piecewise-linear densification of (t, p) keyframes.

    Returns (frames, positions, yaws) covering [t_first, t_last] at
    ``frame_step``. Yaw is atan2 of the ground-plane velocity, held at its
    previous value when speed drops under 0.1 m/s; a single keyframe yields a
    constant pose with yaw 0.
    """
    if not keyframes:
        raise InvalidInputError("interpolate_track: need at least one keyframe")
    ts = np.array([int(t) for t, _ in keyframes])
    ps = np.stack([np.asarray(p, dtype=np.float64).reshape(3) for _, p in keyframes])
    if (np.diff(ts) <= 0).any():
        raise InvalidInputError("interpolate_track: keyframe times must be strictly increasing")

    if len(keyframes) == 1:
        return ts.copy(), ps.copy(), np.zeros(1)

    frames = np.arange(ts[0], ts[-1] + 1, frame_step)
    positions = np.stack([np.interp(frames, ts, ps[:, d]) for d in range(3)], axis=1)

    velocity = np.gradient(positions, axis=0) * FRAME_RATE_HZ / frame_step
    speed_2d = np.linalg.norm(velocity[:, :2], axis=1)
    yaws = np.zeros(len(frames))
    prev = 0.0
    for i in range(len(frames)):
        if speed_2d[i] >= YAW_HOLD_SPEED:
            prev = math.atan2(velocity[i, 1], velocity[i, 0])
        yaws[i] = prev
    return frames, positions, yaws


def build_tracking_boxes(track: TrajectoryTrack) -> np.ndarray:
    """Per-frame 7-DoF boxes (cx, cy, cz, l, w, h, yaw).

    The box center floats h/2 above the track position (positions ride on the
    ground), one box per dense frame.
    """
    l, w, h = track.size
    boxes = np.zeros((len(track.frames), 7))
    boxes[:, :3] = track.positions
    boxes[:, 2] += h / 2.0
    boxes[:, 3:6] = (l, w, h)
    boxes[:, 6] = track.yaws
    return boxes


def _rect_axes(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, s], [-s, c]])  # rows: length axis, width axis


def obb_overlap_2d(center_a, yaw_a, size_a, center_b, yaw_b, size_b) -> bool:
    """Separating-axis intersection test for two oriented ground rectangles.

    ``size`` is (length, width); centers are 2D.
    """
    ca = np.asarray(center_a, dtype=np.float64)[:2]
    cb = np.asarray(center_b, dtype=np.float64)[:2]
    axes = np.vstack([_rect_axes(yaw_a), _rect_axes(yaw_b)])
    half_a = np.array(size_a[:2]) / 2.0
    half_b = np.array(size_b[:2]) / 2.0
    axes_a = _rect_axes(yaw_a)
    axes_b = _rect_axes(yaw_b)
    d = cb - ca
    for axis in axes:
        ra = np.abs(axes_a @ axis) @ half_a
        rb = np.abs(axes_b @ axis) @ half_b
        if abs(d @ axis) > ra + rb:
            return False
    return True


def tracks_collide(a: TrajectoryTrack, b: TrajectoryTrack) -> bool:
    """True when the tracks' boxes intersect at any shared frame."""
    lo = max(a.first_frame, b.first_frame)
    hi = min(a.last_frame, b.last_frame)
    for f in range(lo, hi + 1):
        pa, ya = a.pose_at(f)
        pb, yb = b.pose_at(f)
        if obb_overlap_2d(pa, ya, a.size, pb, yb, b.size):
            return True
    return False


def _walk_centerline(path_points: np.ndarray, distances: np.ndarray) -> np.ndarray:
    """Positions at the given arc-length distances along a polyline."""
    seg = np.linalg.norm(np.diff(path_points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    out = np.stack([np.interp(distances, cum, path_points[:, d]) for d in range(3)], axis=1)
    return out


def _concatenate_lanes(graph: Optional[LaneGraph], lane: Lane, rng: np.random.Generator, max_lanes: int = 6):
    """Entry lane plus randomly-chosen successors, concatenated."""
    points = [lane.centerline]
    current = lane
    for _ in range(max_lanes - 1):
        succ = [s for s in current.successors if graph is not None and s in graph.lanes]
        if not succ:
            break
        current = graph[succ[int(rng.integers(len(succ)))]]
        points.append(current.centerline[1:])
    return np.concatenate(points, axis=0)


def generate_trajectory_rule(
    lanes,
    ego_track: Optional[TrajectoryTrack],
    size: tuple[float, float, float],
    existing: Sequence[TrajectoryTrack],
    seed: int,
    object_id: str = "generated",
    n_frames: Optional[int] = None,
    graph: Optional[LaneGraph] = None,
) -> list[Keyframe]:
    """Deterministic rule-based trajectory proposal.

    Picks a seeded entry lane, follows concatenated centerlines at a constant
    speed drawn from [3, 10] m/s, and emits keyframes every 10 frames. A
    candidate is rejected when its boxes overlap an existing track (the ego
    track counts) at any shared frame; after 20 rejected attempts the
    generation fails.
    """
    lanes = list(lanes)
    if not lanes:
        raise InvalidInputError("generate_trajectory_rule: no lanes")
    if n_frames is None:
        n_frames = ego_track.last_frame if ego_track is not None else 100

    blockers = list(existing)
    if ego_track is not None:
        blockers.append(ego_track)

    rng = np.random.default_rng(seed)
    for _ in range(MAX_ATTEMPTS):
        lane = lanes[int(rng.integers(len(lanes)))]
        speed = float(rng.uniform(*SPEED_RANGE))
        path = _concatenate_lanes(graph, lane, rng)
        seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
        total_len = float(seg.sum())

        n_keys = min(n_frames // KEYFRAME_STRIDE, int(total_len / (speed * KEYFRAME_STRIDE / FRAME_RATE_HZ)))
        if n_keys < 1:
            continue
        key_ts = np.arange(n_keys + 1) * KEYFRAME_STRIDE
        key_dist = key_ts / FRAME_RATE_HZ * speed
        key_ps = _walk_centerline(path, key_dist)
        keyframes = [(int(t), p) for t, p in zip(key_ts, key_ps)]

        candidate = TrajectoryTrack(object_id, keyframes, size)
        if any(tracks_collide(candidate, other) for other in blockers):
            continue
        return keyframes

    raise TrajectoryGenerationError(
        f"no collision-free trajectory for '{object_id}' after {MAX_ATTEMPTS} attempts"
    )
