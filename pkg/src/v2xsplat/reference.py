"""Brute-force reference renderer used as the correctness oracle.

Same compositing contract as :mod:`v2xsplat.rasterizer` (alpha floor 1/255,
transmittance stop 1e-4, 0.99 alpha clamp) but evaluated the slow way: every
visible Gaussian against every pixel, one global depth sort, no tiling. The
blending math is written in float64 numpy so the oracle does not share the
tiled path's tensor machinery or its rounding.
"""

from __future__ import annotations

import numpy as np
import torch

from .camera import Camera
from .gaussians import GaussianSet
from .rasterizer import (
    ALPHA_CLAMP,
    ALPHA_FLOOR,
    TRANSMITTANCE_STOP,
    RenderOutput,
    _per_gaussian_attrs,
)

_ROW_CHUNK = 8


def rasterize_reference(
    gauss: GaussianSet,
    cam: Camera,
    background=(0.0, 0.0, 0.0),
    sh_degree=None,
) -> RenderOutput:
    H, W = cam.height, cam.width
    K = gauss.semantic_classes
    bg = np.asarray(background, dtype=np.float64).reshape(3)

    color = np.tile(bg, (H, W, 1))
    depth = np.zeros((H, W))
    alpha_img = np.zeros((H, W))
    normal = np.zeros((H, W, 3))
    semantic = np.zeros((H, W, K)) if K else None
    contributors = np.zeros((H, W), dtype=np.int64)

    if len(gauss):
        with torch.no_grad():
            proj, colors_t, normals_t, _ = _per_gaussian_attrs(gauss, cam, sh_degree)
            visible = ~proj.culled
            order_all = np.arange(len(gauss))[visible.numpy()]

        if order_all.size:
            z = proj.depths[visible].numpy().astype(np.float64)
            # Global front-to-back order, ties broken by original index.
            order = np.lexsort((order_all, z))
            z = z[order]
            uv = proj.means2d[visible].numpy().astype(np.float64)[order]
            con = proj.conic[visible].numpy().astype(np.float64)[order]
            cols = colors_t[visible].numpy().astype(np.float64)[order]
            nrms = normals_t[visible].numpy().astype(np.float64)[order]
            opac = gauss.opacities.detach()[visible].numpy().astype(np.float64)[order]
            sems = (
                gauss.semantics.detach()[visible].numpy().astype(np.float64)[order] if K else None
            )

            xs = np.arange(W, dtype=np.float64)
            for row0 in range(0, H, _ROW_CHUNK):
                row1 = min(row0 + _ROW_CHUNK, H)
                ys = np.arange(row0, row1, dtype=np.float64)
                px = np.broadcast_to(xs[None, :], (row1 - row0, W)).reshape(-1)
                py = np.broadcast_to(ys[:, None], (row1 - row0, W)).reshape(-1)

                dx = px[:, None] - uv[None, :, 0]  # (P, V)
                dy = py[:, None] - uv[None, :, 1]
                power = -0.5 * (con[None, :, 0] * dx * dx + con[None, :, 2] * dy * dy) - con[None, :, 1] * dx * dy
                a = np.minimum(opac[None, :] * np.exp(np.minimum(power, 0.0)), ALPHA_CLAMP)
                contrib = a >= ALPHA_FLOOR
                a = a * contrib

                t_inc = np.cumprod(1.0 - a, axis=1)
                include = contrib & (t_inc >= TRANSMITTANCE_STOP)
                t_exc = np.concatenate([np.ones((a.shape[0], 1)), t_inc[:, :-1]], axis=1)
                w = a * t_exc * include
                t_final = np.prod(1.0 - a * include, axis=1)

                sl = slice(row0, row1)
                shape2 = (row1 - row0, W)
                color[sl] = (w @ cols + t_final[:, None] * bg).reshape(shape2 + (3,))
                depth[sl] = (w @ z).reshape(shape2)
                alpha_img[sl] = w.sum(axis=1).reshape(shape2)
                normal[sl] = (w @ nrms).reshape(shape2 + (3,))
                if K:
                    semantic[sl] = (w @ sems).reshape(shape2 + (K,))
                contributors[sl] = include.sum(axis=1).reshape(shape2)

    return RenderOutput(
        color=torch.from_numpy(color),
        depth=torch.from_numpy(depth),
        alpha=torch.from_numpy(alpha_img),
        normal=torch.from_numpy(normal),
        semantic=None if semantic is None else torch.from_numpy(semantic),
        contributors=torch.from_numpy(contributors),
    )
