"""Perspective projection of 3D Gaussians to screen-space splats.

First-order (EWA) projection: the 3D covariance is pushed through the
world-to-camera rotation and the Jacobian of the pinhole map, then low-pass
filtered by adding 0.3 px² to the diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import Tensor

from .camera import Camera
from .errors import InvalidInputError

# Footprint radius in standard deviations. sqrt(2 ln 255) covers every pixel
# where the compositing alpha can reach the 1/255 contribution floor for any
# opacity ≤ 1, which keeps tile assignment consistent with the per-pixel rule.
RADIUS_SIGMA = math.sqrt(2.0 * math.log(255.0))

# Low-pass filter added to the projected covariance diagonal, px².
COV2D_FILTER = 0.3


@dataclass
class Projection:
    """Screen-space splat parameters for a batch of Gaussians."""

    means2d: Tensor  # (N, 2) pixel coords
    cov2d: Tensor  # (N, 2, 2) filtered screen-space covariance
    conic: Tensor  # (N, 3) packed inverse covariance (a, b, c)
    depths: Tensor  # (N,) view-space z
    radii: Tensor  # (N,) footprint radius, px
    culled: Tensor  # (N,) bool


def project_gaussians(
    means: Tensor, covariances: Tensor, cam: Camera, opacities: Tensor | None = None
) -> Projection:
    """Project Gaussians (world means + covariances) into a camera.

    Culled entries (depth outside [near, far] or footprint missing the image)
    carry placeholder values and must be skipped by consumers. When
    ``opacities`` is given the footprint tightens to the region where the
    compositing alpha can reach its 1/255 floor for that opacity, which culls
    near-transparent Gaussians outright; the contribution rule is unchanged.
    """
    if not torch.isfinite(means).all() or not torch.isfinite(covariances).all():
        raise InvalidInputError("project_gaussians: non-finite inputs")
    dtype = means.dtype
    R = cam.rotation(dtype)
    t = cam.translation(dtype)

    p_cam = means @ R.transpose(0, 1) + t
    z = p_cam[:, 2]
    in_depth = (z >= cam.near) & (z <= cam.far)
    z_safe = torch.where(in_depth, z, torch.ones_like(z))

    x, y = p_cam[:, 0], p_cam[:, 1]
    u = cam.cx + cam.fx * x / z_safe
    v = cam.cy + cam.fy * y / z_safe
    means2d = torch.stack([u, v], dim=-1)

    zero = torch.zeros_like(z)
    J = torch.stack(
        [
            cam.fx / z_safe,
            zero,
            -cam.fx * x / (z_safe * z_safe),
            zero,
            cam.fy / z_safe,
            -cam.fy * y / (z_safe * z_safe),
        ],
        dim=-1,
    ).reshape(-1, 2, 3)

    cov_cam = torch.einsum("ij,njk,lk->nil", R, covariances, R)
    cov2d = J @ cov_cam @ J.transpose(-1, -2)
    cov2d = cov2d + COV2D_FILTER * torch.eye(2, dtype=dtype)

    a = cov2d[:, 0, 0]
    b = 0.5 * (cov2d[:, 0, 1] + cov2d[:, 1, 0])
    c = cov2d[:, 1, 1]
    det = a * c - b * b
    conic = torch.stack([c / det, -b / det, a / det], dim=-1)

    # Largest eigenvalue of the 2x2 covariance bounds the footprint.
    mid = 0.5 * (a + c)
    disc = torch.sqrt(torch.clamp_min(0.25 * (a - c) ** 2 + b * b, 0.0))
    if opacities is None:
        sigma_mult = RADIUS_SIGMA
    else:
        # alpha = o·exp(-σ) reaches 1/255 only while σ ≤ ln(255·o).
        o = opacities.detach().clamp(max=0.99)
        sigma_mult = torch.sqrt(2.0 * torch.clamp_min(torch.log(255.0 * o), 0.0))
    radii = sigma_mult * torch.sqrt(mid + disc)

    # Pixel centers sit at integers, so the image spans [-0.5, dim - 0.5].
    in_image = (
        (u + radii > -0.5)
        & (u - radii < cam.width - 0.5)
        & (v + radii > -0.5)
        & (v - radii < cam.height - 0.5)
    )
    culled = ~(in_depth & in_image)
    if opacities is not None:
        # Below the contribution floor everywhere: alpha < 1/255 for any pixel.
        culled |= opacities.detach() * 255.0 < 1.0
    return Projection(means2d, cov2d, conic, z, radii, culled)
