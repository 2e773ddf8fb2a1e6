"""The optimization loop over ego and infrastructure frame samples."""

from __future__ import annotations

import csv
import random
from pathlib import Path
from typing import Optional

import torch

from ..errors import InvalidInputError
from ..rasterizer import rasterize
from ..scene import SceneGraph
from .adam import AdamOptimizer
from .appearance import AppearanceGrids
from .config import TrainConfig
from .densify import ComponentStats, densify_and_prune
from .losses import total_loss
from .samples import FrameSample

GAUSS_FIELDS = ("positions", "rotations", "log_scales", "opacity_logits", "sh", "semantics")


def _lr_table(config: TrainConfig) -> dict[str, float]:
    return {
        "positions": config.lr_position,
        "rotations": config.lr_rotation,
        "log_scales": config.lr_scale,
        "opacity_logits": config.lr_opacity,
        "sh": config.lr_sh,
        "semantics": config.lr_semantic,
        "rot_corrections": config.lr_pose_correction,
        "trans_corrections": config.lr_pose_correction,
        "fourier": config.lr_fourier,
        "gain": config.lr_appearance,
        "offset": config.lr_appearance,
    }


def _collect_params(scene: SceneGraph) -> dict[str, torch.Tensor]:
    params: dict[str, torch.Tensor] = {}

    def add_set(prefix: str, gauss):
        for f in GAUSS_FIELDS:
            t = getattr(gauss, f)
            if t is not None and t.numel():
                params[f"{prefix}.{f}"] = t.requires_grad_(True)

    add_set("__background__", scene.background)
    for obj in scene.objects:
        add_set(obj.id, obj.gaussians)
        params[f"{obj.id}.rot_corrections"] = obj.track.rot_corrections.requires_grad_(True)
        params[f"{obj.id}.trans_corrections"] = obj.track.trans_corrections.requires_grad_(True)
        params[f"{obj.id}.fourier"] = obj.fourier.requires_grad_(True)
    return params


def _psnr(a: torch.Tensor, b: torch.Tensor, cap: float = 99.0) -> float:
    mse = float(((a - b) ** 2).mean())
    if mse <= 0:
        return cap
    return min(cap, 10.0 * torch.log10(torch.tensor(1.0 / mse)).item())


def evaluate_psnr(scene: SceneGraph, sample: FrameSample, config: TrainConfig, sh_degree=None) -> float:
    """Holdout-quality PSNR: raw render (no appearance correction) vs GT."""
    with torch.no_grad():
        flat = scene.compose_frame(sample.frame).detached()
        cam = scene.rigs[sample.view][sample.frame]
        out = rasterize(flat, cam, background=config.background, sh_degree=sh_degree)
        return _psnr(out.color, sample.image.to(out.color.dtype))


def train(
    scene: SceneGraph,
    samples: list[FrameSample],
    config: TrainConfig,
) -> tuple[SceneGraph, list[dict]]:
    """Optimize the scene against ``samples``; returns (scene, metrics rows).

    Deterministic for a fixed config seed: sample order, densification
    sampling, and all tensor ops are seeded.
    """
    if not samples:
        raise InvalidInputError("train: empty dataset")

    holdout_samples: list[FrameSample] = []
    train_samples = samples
    if config.holdout:
        held_keys = set(config.holdout)
        train_samples = [s for s in samples if (s.view, s.frame) not in held_keys]
        holdout_samples = [s for s in samples if (s.view, s.frame) in held_keys]
        if not train_samples:
            raise InvalidInputError("train: holdout excludes every sample")

    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)
    densify_gen = torch.Generator().manual_seed(config.seed + 1)

    params = _collect_params(scene)
    appearance = AppearanceGrids(config.appearance_grid, dtype=scene.background.dtype)
    if config.appearance_enabled:
        for s in train_samples:
            appearance.params_for(s.view, s.frame, trainable=True)
        params.update(appearance.parameters())

    optimizer = AdamOptimizer(params, _lr_table(config))
    stats: dict[str, ComponentStats] = {}

    def stats_for(name: str, n: int, dtype) -> ComponentStats:
        st = stats.get(name)
        if st is None or st.accum.shape[0] != n:
            st = ComponentStats.zeros(n, dtype)
            stats[name] = st
        return st

    max_degree = scene.background.sh_degree
    metrics: list[dict] = []
    order: list[int] = []

    for it in range(config.iterations):
        if not order:
            order = list(range(len(train_samples)))
            rng.shuffle(order)
        sample = train_samples[order.pop()]

        if config.sh_degree_interval > 0:
            active_degree = min(max_degree, it // config.sh_degree_interval)
        else:
            active_degree = max_degree

        flat, segments = scene.compose_frame_with_segments(sample.frame)
        cam = scene.rigs[sample.view][sample.frame]
        out = rasterize(flat, cam, background=config.background, sh_degree=active_degree, retain_means2d_grad=True)
        loss, terms, out = total_loss(
            sample, scene, config, appearance=appearance, sh_degree=active_degree, render_out=out, flat=flat
        )
        optimizer.zero_grad()
        loss.backward()

        densify_active = (
            config.densify_interval > 0 and config.densify_start <= it + 1 <= config.densify_stop
        )
        if densify_active and out.means2d is not None and out.means2d.grad is not None:
            norms = out.means2d.grad.norm(dim=-1).detach()
            touched = out.visible.clone()
            for name, s0, s1 in segments:
                st = stats_for(name, s1 - s0, norms.dtype)
                st.add(norms[s0:s1], touched[s0:s1])

        optimizer.step()

        row = {"iteration": it + 1, **terms}
        if densify_active and (it + 1) % config.densify_interval == 0:
            report = densify_and_prune(scene, stats, config, densify_gen, optimizer)
            row["densify_cloned"] = report.cloned
            row["densify_split"] = report.split
            row["densify_pruned"] = report.pruned

        if holdout_samples and config.eval_interval > 0 and (it + 1) % config.eval_interval == 0:
            vals = [evaluate_psnr(scene, s, config, sh_degree=active_degree) for s in holdout_samples]
            row["psnr_holdout"] = sum(vals) / len(vals)
        metrics.append(row)

    for p in params.values():
        p.requires_grad_(False)

    if config.log_path:
        _write_csv(config.log_path, metrics)
    return scene, metrics


def _write_csv(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    fields: list[str] = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
