"""Decomposed scene: static background Gaussians plus dynamic objects with
tracked, correctable per-frame poses and time-varying appearance.

Objects live in a canonical frame centered at their box center; composition
rigidly moves them into world space per frame (learned correction applied
first, tracked pose second) and modulates the SH DC band with a low-order
Fourier basis over normalized time.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch import Tensor

from .camera import Camera
from .errors import FrameRangeError, InvalidInputError, SceneEditConflictError
from .gaussians import GaussianSet
from .imageio import read_mask_png, write_mask_png
from .ply import load_gaussians_ply, save_gaussians_ply
from .sh import rotate_sh_deg1
from .transforms import axis_angle_to_quat, quat_multiply, quat_normalize, quat_to_rotmat

EGO_VIEW = "ego"
INFRA_VIEW = "infrastructure"


@dataclass
class PoseTrack:
    """Tracked per-frame rigid poses over a contiguous frame range, with
    identity-initialized learnable corrections composed on the right."""

    first_frame: int
    rotations: Tensor  # (F, 4) tracked quaternions
    translations: Tensor  # (F, 3) tracked translations
    rot_corrections: Tensor = None  # (F, 3) axis-angle
    trans_corrections: Tensor = None  # (F, 3)

    def __post_init__(self):
        self.rotations = torch.as_tensor(self.rotations)
        if not self.rotations.is_floating_point():
            self.rotations = self.rotations.to(torch.get_default_dtype())
        self.translations = torch.as_tensor(self.translations, dtype=self.rotations.dtype)
        n = self.rotations.shape[0]
        if self.translations.shape != (n, 3) or self.rotations.shape != (n, 4):
            raise InvalidInputError("PoseTrack: rotations (F,4) and translations (F,3) disagree")
        if self.rot_corrections is None:
            self.rot_corrections = torch.zeros((n, 3), dtype=self.rotations.dtype)
        if self.trans_corrections is None:
            self.trans_corrections = torch.zeros((n, 3), dtype=self.rotations.dtype)
        if not torch.isfinite(self.rot_corrections).all() or not torch.isfinite(self.trans_corrections).all():
            raise InvalidInputError("PoseTrack: corrections must be finite")

    def __len__(self) -> int:
        return self.rotations.shape[0]

    @property
    def last_frame(self) -> int:
        return self.first_frame + len(self) - 1

    def has_frame(self, frame: int) -> bool:
        return self.first_frame <= frame <= self.last_frame

    def pose_at(self, frame: int) -> tuple[Tensor, Tensor]:
        """Effective pose (quat, translation) = tracked ∘ correction."""
        if not self.has_frame(frame):
            raise FrameRangeError(f"PoseTrack: no pose at frame {frame}")
        i = frame - self.first_frame
        q_track = quat_normalize(self.rotations[i])
        t_track = self.translations[i]
        q_corr = axis_angle_to_quat(self.rot_corrections[i])
        q = quat_multiply(q_track, q_corr)
        t = t_track + quat_to_rotmat(q_track) @ self.trans_corrections[i]
        return q, t

    def to_dict(self) -> dict:
        return {
            "first_frame": self.first_frame,
            "rotations": self.rotations.detach().tolist(),
            "translations": self.translations.detach().tolist(),
            "rot_corrections": self.rot_corrections.detach().tolist(),
            "trans_corrections": self.trans_corrections.detach().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoseTrack":
        return cls(
            first_frame=int(d["first_frame"]),
            rotations=torch.tensor(d["rotations"]),
            translations=torch.tensor(d["translations"]),
            rot_corrections=torch.tensor(d["rot_corrections"]),
            trans_corrections=torch.tensor(d["trans_corrections"]),
        )


class DynamicObject:
    """A tracked object: canonical Gaussians, box size, pose track, and
    Fourier appearance coefficients for the SH DC band."""

    def __init__(
        self,
        object_id: str,
        gaussians: GaussianSet,
        size,
        track: PoseTrack,
        fourier: Optional[Tensor] = None,
        fourier_order: int = 2,
        validate_extent: bool = True,
    ):
        self.id = str(object_id)
        self.gaussians = gaussians
        self.size = torch.as_tensor(size, dtype=gaussians.dtype).reshape(3)
        self.track = track
        if fourier is None:
            fourier = torch.zeros((3, 2 * fourier_order + 1), dtype=gaussians.dtype)
        self.fourier = torch.as_tensor(fourier, dtype=gaussians.dtype)
        if self.fourier.ndim != 2 or self.fourier.shape[0] != 3 or self.fourier.shape[1] % 2 != 1:
            raise InvalidInputError("DynamicObject: fourier must be (3, 2F+1)")
        if (self.size <= 0).any():
            raise InvalidInputError("DynamicObject: box size must be positive")
        if validate_extent and len(gaussians):
            half = 0.5 * 1.2 * self.size
            if (gaussians.positions.detach().abs() > half).any():
                raise InvalidInputError(f"DynamicObject '{self.id}': Gaussians outside 1.2x box extents")

    @property
    def fourier_order(self) -> int:
        return (self.fourier.shape[1] - 1) // 2

    def appearance_offset(self, frame: int, n_frames: int) -> Tensor:
        """Per-channel SH DC offset at a frame; zero coefficients -> zero."""
        t = torch.tensor(frame / max(n_frames, 1), dtype=self.fourier.dtype)
        terms = [torch.ones((), dtype=self.fourier.dtype)]
        for k in range(1, self.fourier_order + 1):
            terms.append(torch.cos(2 * torch.pi * k * t))
            terms.append(torch.sin(2 * torch.pi * k * t))
        basis = torch.stack(terms)  # (2F+1,)
        return self.fourier @ basis  # (3,)

    def gaussians_at(self, frame: int, n_frames: int) -> GaussianSet:
        """Canonical Gaussians rigidly posed into world space at ``frame``."""
        q, t = self.track.pose_at(frame)
        R = quat_to_rotmat(q)
        g = self.gaussians
        positions = g.positions @ R.transpose(0, 1) + t
        rotations = quat_multiply(q.unsqueeze(0).expand(len(g), 4), g.unit_rotations)
        sh = rotate_sh_deg1(g.sh, R)
        offset = self.appearance_offset(frame, n_frames)
        sh = torch.cat([(sh[:, 0, :] + offset).unsqueeze(1), sh[:, 1:, :]], dim=1)
        return GaussianSet(positions, rotations, g.log_scales, g.opacity_logits, sh, g.semantics)


class SceneGraph:
    """Background + dynamic objects + synchronized camera rigs and ego masks.

    ``compose_count`` counts compose_frame calls; the generation layer uses it
    to assert both views of a frame derive from a single composition.
    """

    def __init__(
        self,
        background: GaussianSet,
        objects: Optional[list[DynamicObject]] = None,
        n_frames: int = 1,
        rigs: Optional[dict[str, list[Camera]]] = None,
        ego_masks: Optional[list[np.ndarray]] = None,
    ):
        self.background = background
        self.objects = list(objects or [])
        self.n_frames = int(n_frames)
        self.rigs = rigs or {}
        self.ego_masks = ego_masks
        self.compose_count = 0
        self.validate()

    def validate(self):
        if self.n_frames <= 0:
            raise InvalidInputError("SceneGraph: n_frames must be positive")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("SceneGraph: duplicate object ids")
        for view, cams in self.rigs.items():
            if len(cams) != self.n_frames:
                raise InvalidInputError(f"SceneGraph: rig '{view}' has {len(cams)} cameras for {self.n_frames} frames")
        if self.ego_masks is not None:
            if len(self.ego_masks) != self.n_frames:
                raise InvalidInputError("SceneGraph: ego mask count != n_frames")
            cams = self.rigs.get(EGO_VIEW)
            if cams:
                h, w = cams[0].height, cams[0].width
                for m in self.ego_masks:
                    if m.shape != (h, w):
                        raise InvalidInputError("SceneGraph: ego mask dimensions disagree with ego camera")

    # -- composition -------------------------------------------------------

    def compose_frame(self, frame: int) -> GaussianSet:
        """Flatten background and live objects into one world-frame set."""
        flat, _ = self.compose_frame_with_segments(frame)
        return flat

    def compose_frame_with_segments(self, frame: int) -> tuple[GaussianSet, list[tuple[str, int, int]]]:
        """Composition plus (component, start, end) index ranges for the
        flat set; the background segment is named '__background__'."""
        if not 0 <= frame < self.n_frames:
            raise FrameRangeError(f"frame {frame} outside [0, {self.n_frames})")
        self.compose_count += 1
        parts = [self.background]
        segments = [("__background__", 0, len(self.background))]
        cursor = len(self.background)
        for obj in self.objects:
            if not obj.track.has_frame(frame):
                continue
            posed = obj.gaussians_at(frame, self.n_frames)
            parts.append(posed)
            segments.append((obj.id, cursor, cursor + len(posed)))
            cursor += len(posed)
        return GaussianSet.cat(parts), segments

    # -- edits ---------------------------------------------------------------

    def get_object(self, object_id: str) -> DynamicObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise SceneEditConflictError(f"no object with id '{object_id}'")

    def insert_object(self, obj: DynamicObject) -> None:
        if any(o.id == obj.id for o in self.objects):
            raise SceneEditConflictError(f"object id '{obj.id}' already present")
        self.objects.append(obj)

    def remove_object(self, object_id: str) -> DynamicObject:
        for i, o in enumerate(self.objects):
            if o.id == object_id:
                return self.objects.pop(i)
        raise SceneEditConflictError(f"no object with id '{object_id}'")


def strip_ego_box(tracks: dict, ego_id: str) -> dict:
    """Drop the ego vehicle's annotation track; other tracks untouched."""
    return {k: v for k, v in tracks.items() if k != ego_id}


def apply_loss_mask(loss_image: Tensor, mask) -> Tensor:
    """Zero a per-pixel loss image (value and gradient) at masked pixels."""
    mask_t = torch.as_tensor(np.asarray(mask), dtype=loss_image.dtype)
    if mask_t.shape != loss_image.shape[: mask_t.ndim] or mask_t.ndim > loss_image.ndim:
        raise InvalidInputError(
            f"apply_loss_mask: mask shape {tuple(mask_t.shape)} does not match loss {tuple(loss_image.shape)}"
        )
    keep = 1.0 - mask_t
    if loss_image.ndim == mask_t.ndim + 1:
        keep = keep.unsqueeze(-1)
    return loss_image * keep


def masked_mean(loss_image: Tensor, mask=None) -> Tensor:
    """Mean over unmasked pixels (zero when everything is masked)."""
    if mask is None:
        return loss_image.mean()
    mask_np = np.asarray(mask) > 0
    masked = apply_loss_mask(loss_image, mask_np)
    per_pixel = masked.reshape(mask_np.shape[0], mask_np.shape[1], -1).mean(dim=-1)
    n_keep = int((~mask_np).sum())
    if n_keep == 0:
        return loss_image.new_zeros(())
    return per_pixel.sum() / n_keep


# -- serialization -----------------------------------------------------------


def save_scene(scene: SceneGraph, directory: str | os.PathLike) -> None:
    root = Path(directory)
    (root / "objects").mkdir(parents=True, exist_ok=True)
    save_gaussians_ply(scene.background, root / "background.ply")
    index = []
    for i, obj in enumerate(scene.objects):
        stem = f"obj_{i:03d}"
        save_gaussians_ply(obj.gaussians, root / "objects" / f"{stem}.ply")
        meta = {
            "id": obj.id,
            "size": obj.size.tolist(),
            "fourier": obj.fourier.detach().tolist(),
            "track": obj.track.to_dict(),
        }
        (root / "objects" / f"{stem}.json").write_text(json.dumps(meta, indent=1))
        index.append(stem)
    rig = {
        "n_frames": scene.n_frames,
        "views": {view: [c.to_dict() for c in cams] for view, cams in scene.rigs.items()},
        "objects": index,
        "has_ego_masks": scene.ego_masks is not None,
    }
    (root / "rig.json").write_text(json.dumps(rig, indent=1))
    if scene.ego_masks is not None:
        (root / "masks").mkdir(exist_ok=True)
        for f, m in enumerate(scene.ego_masks):
            write_mask_png(root / "masks" / f"ego_{f:06d}.png", m)


def load_scene(directory: str | os.PathLike) -> SceneGraph:
    root = Path(directory)
    rig = json.loads((root / "rig.json").read_text())
    background = load_gaussians_ply(root / "background.ply")
    objects = []
    for stem in rig["objects"]:
        meta = json.loads((root / "objects" / f"{stem}.json").read_text())
        objects.append(
            DynamicObject(
                meta["id"],
                load_gaussians_ply(root / "objects" / f"{stem}.ply"),
                meta["size"],
                PoseTrack.from_dict(meta["track"]),
                fourier=torch.tensor(meta["fourier"]),
                validate_extent=False,
            )
        )
    n_frames = int(rig["n_frames"])
    rigs = {view: [Camera.from_dict(d) for d in cams] for view, cams in rig["views"].items()}
    ego_masks = None
    if rig.get("has_ego_masks"):
        ego_masks = [read_mask_png(root / "masks" / f"ego_{f:06d}.png") for f in range(n_frames)]
    return SceneGraph(background, objects, n_frames, rigs, ego_masks)
