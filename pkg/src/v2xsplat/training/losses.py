"""The reconstruction loss suite and its assembly into one training objective.

Total objective:
    L = L_color + λ1·L_depth + λ2·L_normal + λ3·L_sky + λ4·L_sem
        + λ5·L_scale + λ6·L_ratio + λ7·L_reg

Conventions (stated here because several are contract-level):
  * L_color = 0.8·L1 + 0.2·(1−SSIM) on the appearance-corrected render;
    ego-masked pixels are replaced by the ground truth before either term, so
    their value and gradient contributions are exactly zero and the L1 mean
    divides by the unmasked pixel count.
  * SSIM uses an 11×11 Gaussian window (σ = 1.5), C1 = 0.01², C2 = 0.03²,
    averaged over fully-valid windows only (no padding).
  * Depth and normal terms average over pixels with supervision that also
    have rendered alpha ≥ 0.5 (the depth channel is unnormalized).
  * L_normal compares unit vectors: the rendered normal is renormalized, and
    the per-pixel penalty is the channel-sum |Δ|, so exactly opposite
    axis-aligned unit normals cost 2.
  * L_reg is the binary entropy of Gaussian opacities (pushes them to 0/1 so
    floaters become prunable).
"""

from __future__ import annotations

import math
from typing import Optional

import torch
import torch.nn.functional as F
from torch import Tensor

from ..errors import InvalidInputError, NonFiniteLossError
from ..gaussians import GaussianSet, loss_ratio, loss_scale
from ..rasterizer import RenderOutput, rasterize
from ..scene import SceneGraph, masked_mean
from .appearance import AppearanceGrids, appearance_correct
from .config import TrainConfig
from .samples import FrameSample

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
IGNORE_LABEL = 255
ALPHA_SUPERVISION_MIN = 0.5


def _gaussian_window(dtype) -> Tensor:
    half = (SSIM_WINDOW - 1) / 2.0
    x = torch.arange(SSIM_WINDOW, dtype=dtype) - half
    g = torch.exp(-(x**2) / (2 * SSIM_SIGMA**2))
    g = g / g.sum()
    return g[:, None] * g[None, :]


def ssim_torch(a: Tensor, b: Tensor) -> Tensor:
    """Windowed SSIM over valid (fully interior) windows, channel-averaged."""
    if a.shape != b.shape:
        raise InvalidInputError("ssim: image shapes differ")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    h, w, c = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise InvalidInputError(f"ssim: image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    win = _gaussian_window(a.dtype).expand(c, 1, SSIM_WINDOW, SSIM_WINDOW)

    x = a.permute(2, 0, 1)[None]
    y = b.permute(2, 0, 1)[None]
    mu_x = F.conv2d(x, win, groups=c)
    mu_y = F.conv2d(y, win, groups=c)
    var_x = F.conv2d(x * x, win, groups=c) - mu_x**2
    var_y = F.conv2d(y * y, win, groups=c) - mu_y**2
    cov = F.conv2d(x * y, win, groups=c) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return (num / den).mean()


def loss_color(
    rendered: Tensor,
    gt: Tensor,
    appearance: Optional[tuple[Tensor, Tensor]] = None,
    ego_mask=None,
    l1_weight: float = 0.8,
    ssim_weight: float = 0.2,
) -> Tensor:
    if rendered.shape != gt.shape:
        raise InvalidInputError("loss_color: image shapes differ")
    gt = gt.to(rendered.dtype)
    if appearance is not None:
        rendered = appearance_correct(rendered, appearance[0].to(rendered.dtype), appearance[1].to(rendered.dtype))
    if ego_mask is not None:
        m = torch.as_tensor(ego_mask).bool()[..., None]
        rendered = torch.where(m, gt, rendered)
    l1 = masked_mean((rendered - gt).abs(), ego_mask)
    out = l1_weight * l1
    if ssim_weight:
        out = out + ssim_weight * (1.0 - ssim_torch(rendered, gt))
    return out


def loss_depth(rendered_depth: Tensor, lidar_depth: Tensor, validity: Tensor, rendered_alpha: Tensor) -> Tensor:
    """L1 depth error over valid LiDAR pixels with alpha ≥ 0.5; 0 if none."""
    if rendered_depth.shape != lidar_depth.shape:
        raise InvalidInputError("loss_depth: shape mismatch")
    mask = validity.bool() & (rendered_alpha.detach() >= ALPHA_SUPERVISION_MIN)
    if not mask.any():
        return rendered_depth.new_zeros(())
    return (rendered_depth - lidar_depth.to(rendered_depth.dtype)).abs()[mask].mean()


def loss_normal(rendered_normal: Tensor, input_normal: Tensor, rendered_alpha: Tensor) -> Tensor:
    """Channel-sum L1 between unit normals over alpha ≥ 0.5 pixels."""
    if rendered_normal.shape != input_normal.shape:
        raise InvalidInputError("loss_normal: shape mismatch")
    mask = rendered_alpha.detach() >= ALPHA_SUPERVISION_MIN
    if not mask.any():
        return rendered_normal.new_zeros(())
    n = rendered_normal / rendered_normal.norm(dim=-1, keepdim=True).clamp_min(1e-8)
    diff = (n - input_normal.to(n.dtype)).abs().sum(dim=-1)
    return diff[mask].mean()


def loss_sky(rendered_alpha: Tensor, sky_mask) -> Tensor:
    """Binary cross-entropy pushing alpha to 0 on sky and 1 elsewhere."""
    sky = torch.as_tensor(sky_mask).to(rendered_alpha.dtype)
    if sky.shape != rendered_alpha.shape:
        raise InvalidInputError("loss_sky: shape mismatch")
    a = rendered_alpha.clamp(1e-7, 1.0 - 1e-7)
    target = 1.0 - sky
    return -(target * torch.log(a) + (1.0 - target) * torch.log(1.0 - a)).mean()


def loss_semantic(rendered_logits: Tensor, label_image: Tensor) -> Tensor:
    """Softmax cross-entropy over labeled pixels; label 255 is skipped."""
    labels = torch.as_tensor(label_image).long()
    if labels.shape != rendered_logits.shape[:2]:
        raise InvalidInputError("loss_semantic: shape mismatch")
    keep = labels != IGNORE_LABEL
    if not keep.any():
        return rendered_logits.new_zeros(())
    return F.cross_entropy(rendered_logits[keep], labels[keep])


def loss_reg(gauss: GaussianSet, alpha_image: Optional[Tensor] = None) -> Tensor:
    """Opacity entropy mean[−α ln α − (1−α) ln(1−α)] over Gaussians.

    ``alpha_image`` is accepted for signature compatibility (a visibility
    weighted variant is a documented extension point) and is unused.
    """
    del alpha_image
    if len(gauss) == 0:
        return gauss.opacity_logits.new_zeros(())
    a = gauss.opacities.clamp(1e-12, 1.0 - 1e-12)
    return (-(a * torch.log(a) + (1 - a) * torch.log(1 - a))).mean()


_TERMS = ("color", "depth", "normal", "sky", "semantic", "scale", "ratio", "reg")


def total_loss(
    sample: FrameSample,
    scene: SceneGraph,
    config: TrainConfig,
    appearance: Optional[AppearanceGrids] = None,
    sh_degree: Optional[int] = None,
    render_out: Optional[RenderOutput] = None,
    flat: Optional[GaussianSet] = None,
) -> tuple[Tensor, dict[str, float], RenderOutput]:
    """Assemble the full objective for one sample.

    Callers may pass a precomputed (flat, render_out) pair; otherwise the
    frame is composed and rendered here. Raises NonFiniteLossError naming the
    first non-finite term.
    """
    cams = scene.rigs.get(sample.view)
    if cams is None:
        raise InvalidInputError(f"total_loss: scene has no rig '{sample.view}'")
    cam = cams[sample.frame]
    if flat is None:
        flat = scene.compose_frame(sample.frame)
    if render_out is None:
        render_out = rasterize(
            flat, cam, background=config.background, sh_degree=sh_degree, retain_means2d_grad=True
        )

    app_params = None
    if appearance is not None and config.appearance_enabled:
        app_params = appearance.params_for(sample.view, sample.frame, trainable=True)

    ssim_w = config.ssim_weight if config.ssim_in_color else 0.0
    terms: dict[str, Tensor] = {}
    terms["color"] = loss_color(
        render_out.color,
        sample.image,
        appearance=app_params,
        ego_mask=sample.ego_mask,
        l1_weight=config.l1_weight,
        ssim_weight=ssim_w,
    )

    zero = terms["color"].new_zeros(())
    if sample.lidar_depth is not None and config.lambda_depth:
        terms["depth"] = loss_depth(render_out.depth, sample.lidar_depth, sample.depth_valid, render_out.alpha)
    else:
        terms["depth"] = zero
    if sample.normal is not None and config.lambda_normal:
        terms["normal"] = loss_normal(render_out.normal, sample.normal, render_out.alpha)
    else:
        terms["normal"] = zero
    if sample.sky_mask is not None and config.lambda_sky:
        terms["sky"] = loss_sky(render_out.alpha, sample.sky_mask)
    else:
        terms["sky"] = zero
    if sample.semantic_labels is not None and render_out.semantic is not None and config.lambda_semantic:
        terms["semantic"] = loss_semantic(render_out.semantic, sample.semantic_labels)
    else:
        terms["semantic"] = zero
    terms["scale"] = loss_scale(flat.scales, config.geo_loss_reduction) if config.lambda_scale else zero
    terms["ratio"] = loss_ratio(flat.scales, config.geo_loss_reduction) if config.lambda_ratio else zero
    terms["reg"] = loss_reg(flat, render_out.alpha) if config.lambda_reg else zero

    for name in _TERMS:
        v = float(terms[name].detach())
        if not math.isfinite(v):
            raise NonFiniteLossError(name, v)

    total = (
        terms["color"]
        + config.lambda_depth * terms["depth"]
        + config.lambda_normal * terms["normal"]
        + config.lambda_sky * terms["sky"]
        + config.lambda_semantic * terms["semantic"]
        + config.lambda_scale * terms["scale"]
        + config.lambda_ratio * terms["ratio"]
        + config.lambda_reg * terms["reg"]
    )
    scalars = {k: float(v.detach()) for k, v in terms.items()}
    scalars["total"] = float(total.detach())
    return total, scalars, render_out
