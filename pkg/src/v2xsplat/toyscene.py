"""Synthetic street-scene builder used by the demos and the test suite.

The scene is a textured ground plane crossed by two moving box vehicles,
watched by a forward-facing moving ego camera and a static elevated
infrastructure camera. Ground truth (images plus depth / normal / sky
supervision) is rendered from a known Gaussian scene, so reconstruction
quality is measurable against an exact target; a fresh scene initialized
from surface points stands in for the LiDAR-seeded model under training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .camera import Camera, look_at
from .dataio.boxes import BoxTrack, points_in_box
from .dataio.pointcloud import PointCloud, init_gaussians_from_points, save_points_ply
from .gaussians import GaussianSet
from .imageio import write_mask_png, write_pfm, write_png
from .rasterizer import rasterize
from .scene import EGO_VIEW, INFRA_VIEW, DynamicObject, PoseTrack, SceneGraph
from .sh import num_coeffs, rgb_to_sh_dc
from .traffic.lanes import CITY_DRIVING, Lane, LaneGraph, save_vector_map
from .training.config import TrainConfig
from .training.samples import FrameSample
from .transforms import axis_angle_to_quat, rotmat_to_quat

SKY_COLOR = (0.55, 0.70, 0.95)
GROUND_X = (-10.0, 14.0)
GROUND_Y = (-7.0, 7.0)

VAN_SIZE = (4.0, 2.0, 1.6)
JEEP_SIZE = (3.6, 1.8, 1.4)


def _ground_color(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    r = 0.45 + 0.25 * np.sin(2 * np.pi * x / 9.0)
    g = 0.45 + 0.25 * np.cos(2 * np.pi * y / 7.0)
    b = 0.35 + 0.15 * np.sin(2 * np.pi * (x + y) / 11.0)
    return np.stack([r, g, b], axis=-1)


def make_ground(spacing: float = 0.5, thickness: float = 0.02, opacity: float = 0.97, dtype=torch.float32) -> GaussianSet:
    """Flat Gaussians tiling the ground plane with a smooth color field."""
    xs = np.arange(GROUND_X[0], GROUND_X[1] + 1e-6, spacing)
    ys = np.arange(GROUND_Y[0], GROUND_Y[1] + 1e-6, spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    n = gx.size
    positions = np.stack([gx.ravel(), gy.ravel(), np.zeros(n)], axis=1)
    colors = _ground_color(gx.ravel(), gy.ravel())

    rot = torch.zeros((n, 4), dtype=dtype)
    rot[:, 0] = 1.0
    scales = torch.tensor([0.7 * spacing, 0.7 * spacing, thickness], dtype=dtype).repeat(n, 1)
    sh = torch.zeros((n, num_coeffs(1), 3), dtype=dtype)
    sh[:, 0, :] = rgb_to_sh_dc(torch.from_numpy(colors).to(dtype))
    return GaussianSet.from_physical(
        torch.from_numpy(positions).to(dtype), rot, scales, torch.full((n,), opacity), sh
    )


def box_face_points(size, spacing: float, include_bottom: bool = False):
    """Points + outward normals sampled on an axis-aligned box's faces."""
    l, w, h = size
    half = np.array([l, w, h]) / 2.0
    pts, nrms = [], []
    faces = [(0, 1), (0, -1), (1, 1), (1, -1), (2, 1)]
    if include_bottom:
        faces.append((2, -1))
    for axis, sign in faces:
        others = [a for a in range(3) if a != axis]
        u = np.arange(-half[others[0]], half[others[0]] + 1e-6, spacing)
        v = np.arange(-half[others[1]], half[others[1]] + 1e-6, spacing)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        p = np.zeros((uu.size, 3))
        p[:, axis] = sign * half[axis]
        p[:, others[0]] = uu.ravel()
        p[:, others[1]] = vv.ravel()
        nrm = np.zeros((uu.size, 3))
        nrm[:, axis] = sign
        pts.append(p)
        nrms.append(nrm)
    return np.concatenate(pts), np.concatenate(nrms)


def make_box_asset(
    size,
    base_color,
    spacing: float = 0.3,
    opacity: float = 0.97,
    thickness: float = 0.02,
    dtype=torch.float32,
) -> GaussianSet:
    """A hollow box 'vehicle' of flat Gaussians, canonical (centered) frame."""
    pts, nrms = box_face_points(size, spacing)
    n = len(pts)
    base = np.asarray(base_color, dtype=np.float64)
    # Slight per-face tinting so each side is distinguishable.
    tint = 0.12 * nrms @ np.array([0.7, -0.4, 0.5])
    colors = np.clip(base[None, :] + tint[:, None], 0.05, 0.95)

    # Rotate each Gaussian so its thin axis (z column) aligns with the face normal.
    quats = []
    for nrm in nrms:
        z = torch.tensor(nrm, dtype=torch.float64)
        ref = torch.tensor([1.0, 0.0, 0.0] if abs(nrm[0]) < 0.9 else [0.0, 1.0, 0.0], dtype=torch.float64)
        x = torch.linalg.cross(ref, z)
        x = x / x.norm()
        y = torch.linalg.cross(z, x)
        R = torch.stack([x, y, z], dim=1)
        quats.append(rotmat_to_quat(R))
    rot = torch.stack(quats).to(dtype)

    scales = torch.tensor([0.7 * spacing, 0.7 * spacing, thickness], dtype=dtype).repeat(n, 1)
    sh = torch.zeros((n, num_coeffs(1), 3), dtype=dtype)
    sh[:, 0, :] = rgb_to_sh_dc(torch.from_numpy(colors).to(dtype))
    return GaussianSet.from_physical(torch.from_numpy(pts).to(dtype), rot, scales, torch.full((n,), opacity), sh)


def straight_track(object_id: str, size, start, velocity, n_frames: int, yaw: float) -> BoxTrack:
    """Constant-velocity box track; ``start`` is the box center at frame 0."""
    t = np.arange(n_frames)[:, None]
    centers = np.asarray(start, dtype=np.float64)[None, :] + t * np.asarray(velocity, dtype=np.float64)[None, :]
    return BoxTrack(object_id, tuple(size), 0, centers, np.full(n_frames, yaw))


def _pose_track(track: BoxTrack, dtype) -> PoseTrack:
    rotations = torch.stack(
        [axis_angle_to_quat(torch.tensor([0.0, 0.0, y], dtype=torch.float64)) for y in track.yaws]
    ).to(dtype)
    return PoseTrack(track.first_frame, rotations, torch.as_tensor(track.centers, dtype=dtype))


def make_rigs(n_frames: int, image_size: int = 64, dtype=torch.float32) -> dict[str, list[Camera]]:
    intr = dict(
        fx=float(image_size),
        fy=float(image_size),
        cx=image_size / 2.0 - 0.5,
        cy=image_size / 2.0 - 0.5,
        width=image_size,
        height=image_size,
        near=0.2,
        far=120.0,
    )
    ego = []
    for f in range(n_frames):
        x = -12.0 + 0.45 * f
        ego.append(look_at(eye=(x, 0.3, 2.0), target=(x + 10.0, 0.0, 0.6), **intr))
    infra_cam = look_at(eye=(9.0, 8.0, 7.0), target=(0.5, -0.5, 0.0), **intr)
    infra = [infra_cam] * n_frames
    return {EGO_VIEW: ego, INFRA_VIEW: infra}


@dataclass
class ToySceneBundle:
    gt: SceneGraph
    scene: SceneGraph
    samples: list[FrameSample]
    tracks: dict[str, BoxTrack]
    n_frames: int
    image_size: int
    config: TrainConfig = field(default_factory=TrainConfig)


def toy_train_config(iterations: int = 3000, seed: int = 0, **overrides) -> TrainConfig:
    defaults = dict(
        iterations=iterations,
        seed=seed,
        background=SKY_COLOR,
        lambda_scale=0.01,
        lambda_ratio=0.01,
        lambda_reg=0.001,
        lambda_depth=0.05,
        lambda_normal=0.02,
        lambda_sky=0.05,
        lambda_semantic=0.0,
        lr_position=1e-3,
        lr_scale=3e-3,
        lr_opacity=3e-2,
        lr_sh=1.5e-2,
        lr_rotation=1e-3,
        lr_pose_correction=2e-4,
        lr_fourier=2e-3,
        lr_appearance=5e-3,
        densify_interval=0,
        appearance_grid=(4, 4),
        sh_degree_interval=0,
        eval_interval=500,
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)


def make_gt_scene(n_frames: int = 20, image_size: int = 64, dtype=torch.float32) -> tuple[SceneGraph, dict[str, BoxTrack]]:
    tracks = {
        "van": straight_track("van", VAN_SIZE, (-6.0, -1.5, VAN_SIZE[2] / 2), (0.45, 0.0, 0.0), n_frames, 0.0),
        "jeep": straight_track("jeep", JEEP_SIZE, (4.0, 6.0, JEEP_SIZE[2] / 2), (0.0, -0.45, 0.0), n_frames, -np.pi / 2),
    }
    objects = [
        DynamicObject("van", make_box_asset(VAN_SIZE, (0.85, 0.85, 0.9), dtype=dtype), VAN_SIZE, _pose_track(tracks["van"], dtype)),
        DynamicObject("jeep", make_box_asset(JEEP_SIZE, (0.25, 0.7, 0.3), dtype=dtype), JEEP_SIZE, _pose_track(tracks["jeep"], dtype)),
    ]
    gt = SceneGraph(make_ground(dtype=dtype), objects, n_frames, make_rigs(n_frames, image_size, dtype))
    return gt, tracks


def render_gt_samples(
    gt: SceneGraph,
    rng: np.random.Generator,
    depth_keep: float = 0.4,
    ego_masks: list[np.ndarray] | None = None,
) -> list[FrameSample]:
    """Render supervision images for every view and frame of the GT scene."""
    samples = []
    with torch.no_grad():
        for frame in range(gt.n_frames):
            flat = gt.compose_frame(frame).detached()
            for view, cams in gt.rigs.items():
                out = rasterize(flat, cams[frame], background=SKY_COLOR)
                alpha = out.alpha.numpy()
                covered = alpha >= 0.5
                keep = rng.random(alpha.shape) < depth_keep
                depth = np.where(covered & keep, out.depth.numpy(), 0.0)
                normal = out.normal.numpy().copy()
                mask = None
                if view == EGO_VIEW and ego_masks is not None:
                    mask = ego_masks[frame]
                samples.append(
                    FrameSample(
                        view=view,
                        frame=frame,
                        image=out.color.numpy().copy(),
                        lidar_depth=depth,
                        depth_valid=covered & keep,
                        normal=normal,
                        sky_mask=~covered,
                        ego_mask=mask,
                    )
                )
    return samples


def surface_points(tracks: dict[str, BoxTrack], frame: int, spacing: float = 0.4, rng=None) -> np.ndarray:
    """World-space 'LiDAR' points for one frame: ground grid + vehicle faces."""
    xs = np.arange(GROUND_X[0], GROUND_X[1] + 1e-6, spacing)
    ys = np.arange(GROUND_Y[0], GROUND_Y[1] + 1e-6, spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    ground = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
    if rng is not None:
        ground = ground + rng.normal(0, 0.02, ground.shape) * np.array([1.0, 1.0, 0.0])

    chunks = [ground]
    for track in tracks.values():
        if not track.has_frame(frame):
            continue
        center, yaw = track.pose(frame)
        pts, _ = box_face_points(track.size, spacing * 0.8)
        c, s = np.cos(yaw), np.sin(yaw)
        R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        chunks.append(pts @ R.T + center)
    return np.concatenate(chunks, axis=0)


def _seed_set(points: np.ndarray, scale: float, dtype=torch.float32) -> GaussianSet:
    """Mid-gray isotropic seed Gaussians with a fixed scale (toy-scale knob;
    the manifest ingestion path uses the kNN-driven initializer instead)."""
    n = len(points)
    rot = torch.zeros((n, 4), dtype=dtype)
    rot[:, 0] = 1.0
    return GaussianSet(
        torch.from_numpy(np.asarray(points)).to(dtype),
        rot,
        torch.full((n, 3), float(np.log(scale)), dtype=dtype),
        torch.full((n,), 0.1, dtype=dtype),
        torch.zeros((n, num_coeffs(1), 3), dtype=dtype),
    )


def make_training_scene(
    tracks: dict[str, BoxTrack],
    n_frames: int,
    image_size: int,
    ego_masks=None,
    dtype=torch.float32,
    seed: int = 0,
    ground_spacing: float = 0.5,
    object_spacing: float = 0.4,
) -> SceneGraph:
    """Fresh scene seeded from surface points, gray colors, exact tracks."""
    rng = np.random.default_rng(seed)
    pts0 = surface_points(tracks, 0, spacing=ground_spacing, rng=rng)

    outside = np.ones(len(pts0), dtype=bool)
    for track in tracks.values():
        center, yaw = track.pose(0)
        outside &= ~points_in_box(pts0, center, track.size, yaw, margin=0.05)
    background = _seed_set(pts0[outside], 0.45 * ground_spacing, dtype)

    objects = []
    for obj_id, track in tracks.items():
        canon, _ = box_face_points(track.size, object_spacing)
        gauss = _seed_set(canon, 0.45 * object_spacing, dtype)
        objects.append(DynamicObject(obj_id, gauss, track.size, _pose_track(track, dtype), validate_extent=False))

    return SceneGraph(background, objects, n_frames, make_rigs(n_frames, image_size, dtype), ego_masks)


def make_toy_bundle(
    n_frames: int = 20,
    image_size: int = 64,
    seed: int = 0,
    iterations: int = 3000,
    half_ego_mask: bool = False,
    dtype=torch.float32,
) -> ToySceneBundle:
    gt, tracks = make_gt_scene(n_frames, image_size, dtype)
    ego_masks = None
    if half_ego_mask:
        m = np.zeros((image_size, image_size), dtype=bool)
        m[image_size // 2 :, :] = True
        ego_masks = [m.copy() for _ in range(n_frames)]
    rng = np.random.default_rng(seed)
    samples = render_gt_samples(gt, rng, ego_masks=ego_masks)
    scene = make_training_scene(tracks, n_frames, image_size, ego_masks, dtype, seed)
    config = toy_train_config(
        iterations=iterations,
        seed=seed,
        holdout=[(EGO_VIEW, n_frames // 2), (INFRA_VIEW, n_frames // 2)],
    )
    return ToySceneBundle(gt, scene, samples, tracks, n_frames, image_size, config)


# -- intersection lane fixture -------------------------------------------------


def make_intersection_map() -> LaneGraph:
    """Six-lane synthetic intersection matching the toy scene's roads."""

    def line(p0, p1, n=9):
        return np.linspace(p0, p1, n)

    lanes = [
        Lane("approach_e", line((-10, -1.5, 0), (-2, -1.5, 0)), CITY_DRIVING, False, successors=["cross_e"]),
        Lane("cross_e", line((-2, -1.5, 0), (6, -1.5, 0)), CITY_DRIVING, True,
             successors=["exit_e"], predecessors=["approach_e"], adjacent=["cross_s"]),
        Lane("exit_e", line((6, -1.5, 0), (14, -1.5, 0)), CITY_DRIVING, False, predecessors=["cross_e"]),
        Lane("approach_s", line((4, 7, 0), (4, 2, 0)), CITY_DRIVING, False, successors=["cross_s"]),
        Lane("cross_s", line((4, 2, 0), (4, -5, 0)), CITY_DRIVING, True,
             successors=["exit_s"], predecessors=["approach_s"], adjacent=["cross_e"]),
        Lane("exit_s", line((4, -5, 0), (4, -7, 0)), CITY_DRIVING, False, predecessors=["cross_s"]),
        Lane("sidewalk", line((-10, 2.5, 0), (14, 2.5, 0)), "SIDEWALK", False),
    ]
    return LaneGraph(lanes)


# -- on-disk manifest fixture ---------------------------------------------------


def write_toy_manifest(
    directory,
    n_frames: int = 6,
    image_size: int = 48,
    seed: int = 0,
    with_ego_mask: bool = True,
) -> Path:
    """Materialize a small toy scene as a manifest directory for ingestion.

    Includes an extra 'ego_vehicle' track (as infrastructure annotations
    would) so ego-box stripping is exercised.
    """
    root = Path(directory)
    gt, tracks = make_gt_scene(n_frames, image_size)
    rng = np.random.default_rng(seed)
    ego_masks = None
    if with_ego_mask:
        m = np.zeros((image_size, image_size), dtype=bool)
        m[image_size - image_size // 8 :, :] = True
        ego_masks = [m.copy() for _ in range(n_frames)]
    samples = render_gt_samples(gt, rng, ego_masks=ego_masks)

    views: dict[str, dict] = {}
    for view, cams in gt.rigs.items():
        views[view] = {
            "cameras": [c.to_dict() for c in cams],
            "image": [],
            "depth": [],
            "normal": [],
            "sky": [],
        }
        if view == EGO_VIEW and with_ego_mask:
            views[view]["ego_mask"] = []
        for sub in ("image", "depth", "normal", "sky", "ego_mask"):
            if sub in views[view]:
                (root / view / sub).mkdir(parents=True, exist_ok=True)

    by_key = {(s.view, s.frame): s for s in samples}
    for view in gt.rigs:
        for f in range(n_frames):
            s = by_key[(view, f)]
            rel = f"{view}/image/frame_{f:06d}.png"
            write_png(root / rel, s.image.numpy())
            views[view]["image"].append(rel)
            rel = f"{view}/depth/frame_{f:06d}.pfm"
            write_pfm(root / rel, np.where(s.depth_valid.numpy(), s.lidar_depth.numpy(), 0.0))
            views[view]["depth"].append(rel)
            rel = f"{view}/normal/frame_{f:06d}.pfm"
            write_pfm(root / rel, s.normal.numpy())
            views[view]["normal"].append(rel)
            rel = f"{view}/sky/frame_{f:06d}.png"
            write_mask_png(root / rel, s.sky_mask.numpy())
            views[view]["sky"].append(rel)
            if "ego_mask" in views[view]:
                rel = f"{view}/ego_mask/frame_{f:06d}.png"
                write_mask_png(root / rel, s.ego_mask)
                views[view]["ego_mask"].append(rel)

    (root / "lidar").mkdir(exist_ok=True)
    lidar_entries = []
    for f in range(n_frames):
        pts = surface_points(tracks, f, spacing=0.5, rng=rng)
        rel = f"lidar/frame_{f:06d}.ply"
        save_points_ply(PointCloud(pts), root / rel)
        lidar_entries.append(
            {"frame": f, "sensor": "fused", "path": rel, "sensor_to_world": np.eye(4).tolist()}
        )

    # The infrastructure annotations also contain the ego vehicle's own box.
    ego_track = straight_track("ego_vehicle", (4.2, 2.0, 1.7), (-12.0, 0.3, 0.85), (0.45, 0.0, 0.0), n_frames, 0.0)
    track_dicts = [t.to_dict() for t in tracks.values()] + [ego_track.to_dict()]

    save_vector_map(make_intersection_map(), root / "map.json")

    manifest = {
        "n_frames": n_frames,
        "semantic_classes": 0,
        "ego_id": "ego_vehicle",
        "vector_map": "map.json",
        "views": views,
        "lidar": lidar_entries,
        "tracks": track_dicts,
    }
    mpath = root / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=1))
    return mpath
