"""Differentiable tile-based forward rasterizer with multi-channel outputs.

Compositing model (shared with the brute-force reference renderer):
front-to-back alpha blending in view-depth order with stable index
tie-breaking. Per Gaussian and pixel, α = opacity · exp(−½ dᵀΣ'⁻¹d) clamped
at 0.99; contributions with α < 1/255 are skipped, and blending stops before
any Gaussian that would drop the transmittance below 1e-4. Pixels no Gaussian
touches keep alpha 0 and the background color.

The forward pass is pure torch, so the backward pass is the exact adjoint of
this compositing chain via autograd. Work is batched over tiles as padded
(tile, slot, pixel) tensors; summation order within a pixel is the depth
order, which makes outputs deterministic for fixed inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import Tensor

from .camera import Camera
from .errors import InvalidInputError
from .gaussians import GaussianSet
from .projection import Projection, project_gaussians
from .sh import eval_sh_color
from .transforms import quat_to_rotmat

TILE_SIZE = 16
ALPHA_CLAMP = 0.99
ALPHA_FLOOR = 1.0 / 255.0
TRANSMITTANCE_STOP = 1e-4
# Target element count for one padded compositing batch (memory/padding knob).
_CHUNK_ELEMS = 1_000_000


@dataclass
class RenderOutput:
    color: Tensor  # (H, W, 3) in [0, 1]
    depth: Tensor  # (H, W) alpha-weighted expected depth (unnormalized)
    alpha: Tensor  # (H, W) in [0, 1]
    normal: Tensor  # (H, W, 3) camera-frame normals, blended
    semantic: Optional[Tensor]  # (H, W, K) blended logits, or None
    contributors: Tensor  # (H, W) int, Gaussians composited per pixel
    means2d: Optional[Tensor] = None  # (N, 2) projected means (grad hook)
    visible: Optional[Tensor] = None  # (N,) bool, not culled


def _per_gaussian_attrs(gauss: GaussianSet, cam: Camera, sh_degree: Optional[int]):
    """Projection plus per-Gaussian color and camera-frame normal."""
    degree = gauss.sh_degree if sh_degree is None else min(sh_degree, gauss.sh_degree)
    dtype = gauss.dtype
    proj = project_gaussians(gauss.positions, gauss.covariances(), cam, opacities=gauss.opacities)

    center = cam.center(dtype)
    to_gauss = gauss.positions - center
    view_dirs = to_gauss / to_gauss.norm(dim=-1, keepdim=True).clamp_min(1e-12)
    colors = eval_sh_color(degree, gauss.sh, view_dirs)

    # Normal = rotation column of the smallest scale, flipped toward the camera.
    R = quat_to_rotmat(gauss.unit_rotations)
    smallest = gauss.scales.argmin(dim=-1)
    n_world = torch.gather(R, 2, smallest[:, None, None].expand(-1, 3, 1)).squeeze(-1)
    facing_away = (n_world * to_gauss).sum(dim=-1, keepdim=True) > 0
    n_world = torch.where(facing_away, -n_world, n_world)
    n_cam = n_world @ cam.rotation(dtype).transpose(0, 1)

    return proj, colors, n_cam, degree


def _tile_table(proj: Projection, width: int, height: int, tile: int):
    """Padded (tile, slot) index table, depth-sorted per tile, -1 padded."""
    visible = ~proj.culled
    vis_idx = visible.nonzero(as_tuple=True)[0].cpu().numpy()
    if vis_idx.size == 0:
        return None

    u = proj.means2d[visible, 0].detach().cpu().numpy().astype(np.float64)
    v = proj.means2d[visible, 1].detach().cpu().numpy().astype(np.float64)
    r = proj.radii[visible].detach().cpu().numpy().astype(np.float64)
    z = proj.depths[visible].detach().cpu().numpy().astype(np.float64)

    tiles_x = (width + tile - 1) // tile
    tiles_y = (height + tile - 1) // tile
    tx0 = np.clip(np.floor((u - r + 0.5) / tile).astype(np.int64), 0, tiles_x - 1)
    tx1 = np.clip(np.floor((u + r + 0.5) / tile).astype(np.int64), 0, tiles_x - 1)
    ty0 = np.clip(np.floor((v - r + 0.5) / tile).astype(np.int64), 0, tiles_y - 1)
    ty1 = np.clip(np.floor((v + r + 0.5) / tile).astype(np.int64), 0, tiles_y - 1)

    widths = tx1 - tx0 + 1
    counts = widths * (ty1 - ty0 + 1)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    total = int(counts.sum())

    owner = np.repeat(np.arange(vis_idx.size), counts)
    local = np.arange(total) - offsets[owner]
    dy, dx = np.divmod(local, widths[owner])
    tile_id = (ty0[owner] + dy) * tiles_x + (tx0[owner] + dx)

    # Sort pairs by tile, then depth, then original index (stable ordering).
    order = np.lexsort((owner, z[owner], tile_id))
    tile_sorted = tile_id[order]
    owner_sorted = owner[order]

    n_tiles = tiles_x * tiles_y
    tile_counts = np.bincount(tile_sorted, minlength=n_tiles)
    k_max = int(tile_counts.max()) if total else 0
    tile_offsets = np.concatenate([[0], np.cumsum(tile_counts)[:-1]])
    slot = np.arange(total) - tile_offsets[tile_sorted]

    table = np.full((n_tiles, k_max), -1, dtype=np.int64)
    table[tile_sorted, slot] = vis_idx[owner_sorted]
    return table, tile_counts, tiles_x, tiles_y


def rasterize(
    gauss: GaussianSet,
    cam: Camera,
    background=(0.0, 0.0, 0.0),
    sh_degree: Optional[int] = None,
    retain_means2d_grad: bool = False,
) -> RenderOutput:
    """Render a world-frame GaussianSet through ``cam``."""
    dtype = gauss.dtype
    H, W = cam.height, cam.width
    bg = torch.as_tensor(background, dtype=dtype).reshape(3)
    K = gauss.semantic_classes

    def _background_output(proj=None):
        sem = torch.zeros((H, W, K), dtype=dtype) if K else None
        return RenderOutput(
            color=bg.expand(H, W, 3).clone(),
            depth=torch.zeros((H, W), dtype=dtype),
            alpha=torch.zeros((H, W), dtype=dtype),
            normal=torch.zeros((H, W, 3), dtype=dtype),
            semantic=sem,
            contributors=torch.zeros((H, W), dtype=torch.long),
            means2d=None if proj is None else proj.means2d,
            visible=None if proj is None else ~proj.culled,
        )

    if len(gauss) == 0:
        return _background_output()

    proj, colors, normals, _ = _per_gaussian_attrs(gauss, cam, sh_degree)
    if retain_means2d_grad and proj.means2d.requires_grad:
        proj.means2d.retain_grad()

    tiled = _tile_table(proj, W, H, TILE_SIZE)
    if tiled is None:
        return _background_output(proj)
    table_np, tile_counts, tiles_x, tiles_y = tiled

    opac = gauss.opacities
    sems = gauss.semantics
    z = proj.depths
    conic = proj.conic
    means2d = proj.means2d

    n_tiles, k_max = table_np.shape
    p2 = TILE_SIZE * TILE_SIZE

    # Pixel centers for every tile, shape (n_tiles, p2).
    ty, tx = np.divmod(np.arange(n_tiles), tiles_x)
    py_local, px_local = np.divmod(np.arange(p2), TILE_SIZE)
    px_np = tx[:, None] * TILE_SIZE + px_local[None, :]
    py_np = ty[:, None] * TILE_SIZE + py_local[None, :]
    px = torch.from_numpy(px_np).to(dtype)
    py = torch.from_numpy(py_np).to(dtype)

    pad_np = table_np >= 0
    safe_np = np.where(pad_np, table_np, 0)

    # Group tiles by occupancy (ascending) so one crowded tile does not
    # inflate the padded batch of every sparse tile sharing its chunk.
    count_order = np.argsort(tile_counts, kind="stable")
    counts_sorted = tile_counts[count_order]
    bounds = []
    i = 0
    while i < n_tiles:
        j = i + 1
        while j < n_tiles and (j + 1 - i) * max(int(counts_sorted[j]), 1) * p2 <= _CHUNK_ELEMS:
            j += 1
        bounds.append((i, j))
        i = j

    out_chunks: dict[str, list[Tensor]] = {k: [] for k in ("color", "depth", "alpha", "normal", "sem", "contrib")}

    for start, stop in bounds:
        subset = count_order[start:stop]
        k_chunk = int(counts_sorted[stop - 1])
        if k_chunk == 0:
            tc = stop - start
            out_chunks["color"].append(bg.expand(tc, p2, 3).clone())
            out_chunks["depth"].append(torch.zeros((tc, p2), dtype=dtype))
            out_chunks["alpha"].append(torch.zeros((tc, p2), dtype=dtype))
            out_chunks["normal"].append(torch.zeros((tc, p2, 3), dtype=dtype))
            if K:
                out_chunks["sem"].append(torch.zeros((tc, p2, K), dtype=dtype))
            out_chunks["contrib"].append(torch.zeros((tc, p2), dtype=torch.long))
            continue

        idx = torch.from_numpy(safe_np[subset, :k_chunk])
        pad = torch.from_numpy(pad_np[subset, :k_chunk]).to(dtype)
        sub = torch.from_numpy(subset)

        c2d = means2d[idx]  # (tc, k, 2)
        con = conic[idx]  # (tc, k, 3)
        dxp = px[sub, None, :] - c2d[..., 0:1]  # (tc, k, p2)
        dyp = py[sub, None, :] - c2d[..., 1:2]
        power = -0.5 * (con[..., 0:1] * dxp * dxp + con[..., 2:3] * dyp * dyp) - con[..., 1:2] * dxp * dyp
        g = torch.exp(torch.clamp_max(power, 0.0))

        alpha = torch.clamp_max(opac[idx][..., None] * g, ALPHA_CLAMP) * pad[..., None]
        contrib = alpha >= ALPHA_FLOOR
        alpha = alpha * contrib

        one_minus = 1.0 - alpha
        t_inc = torch.cumprod(one_minus, dim=1)
        include = contrib & (t_inc >= TRANSMITTANCE_STOP)
        t_exc = torch.cat([torch.ones_like(t_inc[:, :1]), t_inc[:, :-1]], dim=1)
        w = alpha * t_exc * include  # (tc, k, p2)

        t_final = torch.prod(1.0 - alpha * include, dim=1)  # (tc, p2)

        out_chunks["color"].append(torch.einsum("tkp,tkc->tpc", w, colors[idx]) + t_final[..., None] * bg)
        out_chunks["depth"].append((w * z[idx][..., None]).sum(dim=1))
        out_chunks["alpha"].append(w.sum(dim=1))
        out_chunks["normal"].append(torch.einsum("tkp,tkc->tpc", w, normals[idx]))
        if K:
            out_chunks["sem"].append(torch.einsum("tkp,tkc->tpc", w, sems[idx]))
        out_chunks["contrib"].append(include.sum(dim=1))

    unsort = torch.from_numpy(np.argsort(count_order))

    def _assemble(chunks: list[Tensor], channels: int) -> Tensor:
        flat = torch.cat(chunks, dim=0)[unsort]  # back to natural tile order
        shape = (tiles_y, tiles_x, TILE_SIZE, TILE_SIZE) + ((channels,) if channels else ())
        img = flat.reshape(shape)
        img = img.permute(0, 2, 1, 3, 4) if channels else img.permute(0, 2, 1, 3)
        img = img.reshape((tiles_y * TILE_SIZE, tiles_x * TILE_SIZE) + ((channels,) if channels else ()))
        return img[:H, :W]

    return RenderOutput(
        color=_assemble(out_chunks["color"], 3),
        depth=_assemble(out_chunks["depth"], 0),
        alpha=_assemble(out_chunks["alpha"], 0),
        normal=_assemble(out_chunks["normal"], 3),
        semantic=_assemble(out_chunks["sem"], K) if K else None,
        contributors=_assemble(out_chunks["contrib"], 0),
        means2d=proj.means2d,
        visible=~proj.culled,
    )


_GRAD_CHANNELS = ("color", "depth", "alpha", "normal", "semantic")


def rasterize_backward(
    gauss: GaussianSet,
    cam: Camera,
    grads: dict,
    background=(0.0, 0.0, 0.0),
    sh_degree: Optional[int] = None,
) -> dict:
    """Analytic parameter gradients for adjoint images of the render outputs.

    ``grads`` maps any subset of {color, depth, alpha, normal, semantic} to
    arrays shaped like the corresponding RenderOutput channel. Returns
    gradients keyed by the GaussianSet storage fields; culled Gaussians get
    exact zeros.
    """
    if not grads:
        raise InvalidInputError("rasterize_backward: no adjoint channels given")
    unknown = set(grads) - set(_GRAD_CHANNELS)
    if unknown:
        raise InvalidInputError(f"rasterize_backward: unknown channels {sorted(unknown)}")

    leaves = {
        "positions": gauss.positions.detach().clone().requires_grad_(True),
        "rotations": gauss.rotations.detach().clone().requires_grad_(True),
        "log_scales": gauss.log_scales.detach().clone().requires_grad_(True),
        "opacity_logits": gauss.opacity_logits.detach().clone().requires_grad_(True),
        "sh": gauss.sh.detach().clone().requires_grad_(True),
    }
    if gauss.semantics is not None:
        leaves["semantics"] = gauss.semantics.detach().clone().requires_grad_(True)
    live = GaussianSet(
        leaves["positions"],
        leaves["rotations"],
        leaves["log_scales"],
        leaves["opacity_logits"],
        leaves["sh"],
        leaves.get("semantics"),
    )

    out = rasterize(live, cam, background=background, sh_degree=sh_degree)
    total = None
    for name, adj in grads.items():
        channel = getattr(out, name)
        if channel is None:
            raise InvalidInputError(f"rasterize_backward: scene has no '{name}' channel")
        adj_t = torch.as_tensor(adj, dtype=channel.dtype)
        if adj_t.shape != channel.shape:
            raise InvalidInputError(
                f"rasterize_backward: adjoint for '{name}' has shape {tuple(adj_t.shape)}, "
                f"expected {tuple(channel.shape)}"
            )
        term = (channel * adj_t).sum()
        total = term if total is None else total + term

    names = list(leaves)
    if not total.requires_grad:  # everything culled or empty scene
        return {n: torch.zeros_like(leaves[n]) for n in names}
    grads_out = torch.autograd.grad(total, [leaves[n] for n in names], allow_unused=True)
    return {n: (g if g is not None else torch.zeros_like(leaves[n])) for n, g in zip(names, grads_out)}
