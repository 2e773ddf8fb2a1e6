"""Per-image affine color grids for appearance decoupling.

Each training image owns a low-resolution grid of per-channel gains ``a``
(init 1) and offsets ``b`` (init 0); corrected = upsample(a) ⊙ image +
upsample(b). The upsampling is bilinear with corner alignment, so grid
corners map exactly onto image corners. The correction exists only inside
the reconstruction loss; generated data is rendered without it.
"""

from __future__ import annotations

import torch
from torch import Tensor

from ..errors import InvalidInputError


def bilinear_upsample(grid: Tensor, height: int, width: int) -> Tensor:
    """Upsample (Gh, Gw, C) to (height, width, C), corners aligned.

    Degenerate 1-wide grid axes broadcast as constants.
    """
    gh, gw, _ = grid.shape
    dtype = grid.dtype

    def coords(n_out: int, n_in: int) -> tuple[Tensor, Tensor, Tensor]:
        if n_in == 1 or n_out == 1:
            idx = torch.zeros(n_out, dtype=torch.long)
            return idx, idx, torch.zeros(n_out, dtype=dtype)
        u = torch.arange(n_out, dtype=dtype) * (n_in - 1) / (n_out - 1)
        i0 = u.floor().long().clamp(0, n_in - 2)
        return i0, i0 + 1, u - i0.to(dtype)

    y0, y1, fy = coords(height, gh)
    x0, x1, fx = coords(width, gw)
    top = grid[y0][:, x0] * (1 - fx)[None, :, None] + grid[y0][:, x1] * fx[None, :, None]
    bot = grid[y1][:, x0] * (1 - fx)[None, :, None] + grid[y1][:, x1] * fx[None, :, None]
    return top * (1 - fy)[:, None, None] + bot * fy[:, None, None]


def appearance_correct(image: Tensor, gain: Tensor, offset: Tensor) -> Tensor:
    """Apply a low-resolution affine color grid to an (H, W, 3) image."""
    if gain.shape != offset.shape or gain.ndim != 3 or gain.shape[-1] != 3:
        raise InvalidInputError("appearance_correct: gain/offset must both be (Gh, Gw, 3)")
    h, w = image.shape[:2]
    a = bilinear_upsample(gain, h, w)
    b = bilinear_upsample(offset, h, w)
    return a * image + b


class AppearanceGrids:
    """Lazily-created affine grids keyed by (view, frame)."""

    def __init__(self, grid_hw: tuple[int, int] = (8, 8), dtype=torch.float32):
        self.grid_hw = (int(grid_hw[0]), int(grid_hw[1]))
        if min(self.grid_hw) < 1:
            raise InvalidInputError("AppearanceGrids: resolution must be at least 1x1")
        self.dtype = dtype
        self._grids: dict[tuple[str, int], tuple[Tensor, Tensor]] = {}

    def params_for(self, view: str, frame: int, trainable: bool = False) -> tuple[Tensor, Tensor]:
        key = (view, int(frame))
        if key not in self._grids:
            gh, gw = self.grid_hw
            gain = torch.ones((gh, gw, 3), dtype=self.dtype)
            offset = torch.zeros((gh, gw, 3), dtype=self.dtype)
            if trainable:
                gain.requires_grad_(True)
                offset.requires_grad_(True)
            self._grids[key] = (gain, offset)
        return self._grids[key]

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for (view, frame), (gain, offset) in self._grids.items():
            out[f"appearance.{view}.{frame}.gain"] = gain
            out[f"appearance.{view}.{frame}.offset"] = offset
        return out

    def correct(self, image: Tensor, view: str, frame: int) -> Tensor:
        gain, offset = self.params_for(view, frame)
        return appearance_correct(image, gain.to(image.dtype), offset.to(image.dtype))
