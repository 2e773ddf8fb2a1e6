"""Fitting generated vehicle assets into target tracking boxes."""

from __future__ import annotations

import torch

from ..errors import InvalidInputError
from ..gaussians import GaussianSet


def fit_asset_to_box(asset: GaussianSet, size) -> GaussianSet:
    """Recenter an asset and uniformly scale it into an (l, w, h) box.

    The asset is assumed axis-aligned in its own frame with length along x,
    width along y, height along z. Scaling uses the max-ratio fit: the single
    factor min(l/ext_x, w/ext_y, h/ext_z), so the asset touches the box along
    its tightest axis without exceeding it anywhere. Gaussian scales shrink
    or grow by the same factor.
    """
    if len(asset) == 0:
        raise InvalidInputError("fit_asset_to_box: empty asset")
    size_t = torch.as_tensor(size, dtype=asset.dtype).reshape(3)
    if (size_t <= 0).any():
        raise InvalidInputError("fit_asset_to_box: box size must be positive")

    pos = asset.positions.detach()
    lo = pos.min(dim=0).values
    hi = pos.max(dim=0).values
    extent = hi - lo
    if (extent <= 0).any():
        raise InvalidInputError("fit_asset_to_box: degenerate (zero-extent) asset")
    center = 0.5 * (lo + hi)

    factor = float((size_t / extent).min())
    return GaussianSet(
        (asset.positions - center) * factor,
        asset.rotations,
        asset.log_scales + torch.log(torch.tensor(factor, dtype=asset.dtype)),
        asset.opacity_logits,
        asset.sh,
        asset.semantics,
    )
