"""Synchronized dual-view rendering, ego paste-back, and dataset export."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import torch
from torch import Tensor

from ..errors import FrameRangeError, InvalidInputError
from ..imageio import write_pfm, write_png
from ..rasterizer import RenderOutput, rasterize
from ..scene import EGO_VIEW, SceneGraph
from .annotations import export_annotations, write_kitti_labels


def render_v2x(
    scene: SceneGraph,
    frames: Iterable[int],
    background=(0.0, 0.0, 0.0),
    sh_degree: Optional[int] = None,
) -> dict[int, dict[str, RenderOutput]]:
    """Render every rig view from one composition per frame.

    Both views of a frame derive from the identical composed Gaussian set, so
    the image pair is synchronized by construction (no temporal offset).
    """
    frames = list(frames)
    for f in frames:
        if not 0 <= f < scene.n_frames:
            raise FrameRangeError(f"frame {f} outside [0, {scene.n_frames})")
        for view, cams in scene.rigs.items():
            if f >= len(cams):
                raise FrameRangeError(f"rig '{view}' has no camera for frame {f}")

    out: dict[int, dict[str, RenderOutput]] = {}
    with torch.no_grad():
        for f in frames:
            flat = scene.compose_frame(f).detached()
            out[f] = {
                view: rasterize(flat, cams[f], background=background, sh_degree=sh_degree)
                for view, cams in scene.rigs.items()
            }
    return out


def paste_ego(rendered: Tensor, source, mask) -> Tensor:
    """Per pixel: mask ? source : rendered (restores the ego-car region)."""
    src = torch.as_tensor(np.asarray(source), dtype=rendered.dtype)
    m = torch.as_tensor(np.asarray(mask)).bool()
    if src.shape != rendered.shape or m.shape != rendered.shape[:2]:
        raise InvalidInputError("paste_ego: shape mismatch between rendered, source, and mask")
    return torch.where(m[..., None], src, rendered)


def write_dataset(
    scene: SceneGraph,
    frames: Iterable[int],
    directory: str | os.PathLike,
    background=(0.0, 0.0, 0.0),
    source_ego_images: Optional[dict[int, np.ndarray]] = None,
    sh_degree: Optional[int] = None,
) -> dict:
    """Render, paste back ego pixels, and export images/depth/labels.

    Layout: <dir>/<view>/{image,label,depth}/frame_%06d.{png,txt,pfm} plus a
    manifest.json listing the frame pairs and rig parameters. Returns the
    manifest dict.
    """
    frames = list(frames)
    root = Path(directory)
    renders = render_v2x(scene, frames, background=background, sh_degree=sh_degree)

    for view in scene.rigs:
        (root / view / "image").mkdir(parents=True, exist_ok=True)
        (root / view / "depth").mkdir(parents=True, exist_ok=True)

    for f in frames:
        for view, out in renders[f].items():
            color = out.color
            if view == EGO_VIEW and scene.ego_masks is not None and source_ego_images and f in source_ego_images:
                color = paste_ego(color, source_ego_images[f], scene.ego_masks[f])
            write_png(root / view / "image" / f"frame_{f:06d}.png", color.numpy())
            write_pfm(root / view / "depth" / f"frame_{f:06d}.pfm", out.depth.numpy())

    records = export_annotations(scene, frames)
    write_kitti_labels(records, root, frames=frames)

    manifest = {
        "frames": frames,
        "views": {view: [cams[f].to_dict() for f in frames] for view, cams in scene.rigs.items()},
        "pairs": [
            {view: f"{view}/image/frame_{f:06d}.png" for view in scene.rigs} | {"frame": f} for f in frames
        ],
        "labels": {view: [f"{view}/label/frame_{f:06d}.txt" for f in frames] for view in scene.rigs},
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest
