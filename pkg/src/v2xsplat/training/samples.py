"""One supervised training view: images plus sparse/sidecar supervision."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import Tensor

from ..errors import InvalidInputError


def _img(x) -> Tensor:
    t = torch.as_tensor(np.asarray(x))
    return t if t.is_floating_point() else t.to(torch.get_default_dtype())


@dataclass
class FrameSample:
    view: str  # rig tag, e.g. "ego" or "infrastructure"
    frame: int
    image: Tensor  # (H, W, 3) ground-truth color in [0, 1]
    lidar_depth: Optional[Tensor] = None  # (H, W) meters, sparse
    depth_valid: Optional[Tensor] = None  # (H, W) bool
    normal: Optional[Tensor] = None  # (H, W, 3) unit vectors
    sky_mask: Optional[Tensor] = None  # (H, W) bool/0-1, 1 = sky
    semantic_labels: Optional[Tensor] = None  # (H, W) int, 255 = ignore
    ego_mask: Optional[np.ndarray] = None  # (H, W) bool, ego view only

    def __post_init__(self):
        self.image = _img(self.image)
        h, w = self.image.shape[:2]
        if self.image.shape != (h, w, 3):
            raise InvalidInputError("FrameSample: image must be (H, W, 3)")

        if self.lidar_depth is not None:
            self.lidar_depth = _img(self.lidar_depth)
            if self.depth_valid is None:
                self.depth_valid = torch.isfinite(self.lidar_depth) & (self.lidar_depth > 0)
            else:
                self.depth_valid = torch.as_tensor(np.asarray(self.depth_valid)).bool()
            # Validity may only mark finite positive depths.
            self.depth_valid = self.depth_valid & torch.isfinite(self.lidar_depth) & (self.lidar_depth > 0)

        for name in ("lidar_depth", "depth_valid", "sky_mask", "semantic_labels"):
            v = getattr(self, name)
            if v is not None and tuple(np.asarray(v).shape) != (h, w):
                raise InvalidInputError(f"FrameSample: {name} shape differs from image ({h}, {w})")
        if self.normal is not None:
            self.normal = _img(self.normal)
            if self.normal.shape != (h, w, 3):
                raise InvalidInputError("FrameSample: normal map must be (H, W, 3)")
        if self.sky_mask is not None:
            self.sky_mask = torch.as_tensor(np.asarray(self.sky_mask)).bool()
        if self.semantic_labels is not None:
            self.semantic_labels = torch.as_tensor(np.asarray(self.semantic_labels)).long()
        if self.ego_mask is not None:
            self.ego_mask = np.asarray(self.ego_mask) > 0
            if self.ego_mask.shape != (h, w):
                raise InvalidInputError("FrameSample: ego mask shape differs from image")

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]
