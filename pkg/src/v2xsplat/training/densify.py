"""Adaptive density control: clone small / split large high-gradient
Gaussians and prune transparent ones.

Clone opacity convention: a cloned pair gets opacity o' = 1 − sqrt(1 − o) so
that two coincident copies composite to exactly the parent's alpha; the
rendered image is preserved at the moment of cloning. Splits keep the parent
opacity, shrink scales by 1.6, and sample child centers from the parent
distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import Tensor

from ..gaussians import GaussianSet, inverse_sigmoid
from ..transforms import quat_to_rotmat
from .adam import AdamOptimizer
from .config import TrainConfig

SPLIT_SCALE_DIV = 1.6
SPLIT_CHILDREN = 2


@dataclass
class ComponentStats:
    """Accumulated screen-space positional gradient norms per Gaussian."""

    accum: Tensor
    denom: Tensor

    @classmethod
    def zeros(cls, n: int, dtype) -> "ComponentStats":
        return cls(torch.zeros(n, dtype=dtype), torch.zeros(n, dtype=dtype))

    def add(self, grad_norms: Tensor, touched: Tensor) -> None:
        self.accum[touched] += grad_norms[touched]
        self.denom[touched] += 1

    def mean(self) -> Tensor:
        out = self.accum / self.denom.clamp_min(1)
        return torch.nan_to_num(out, nan=0.0)


@dataclass
class DensifyReport:
    cloned: int = 0
    split: int = 0
    pruned: int = 0
    per_component: dict = field(default_factory=dict)

    def merge(self, name: str, cloned: int, split: int, pruned: int) -> None:
        self.cloned += cloned
        self.split += split
        self.pruned += pruned
        self.per_component[name] = {"cloned": cloned, "split": split, "pruned": pruned}


def densify_component(
    gauss: GaussianSet,
    stats: ComponentStats,
    config: TrainConfig,
    generator: torch.Generator,
) -> tuple[GaussianSet, Tensor, int, tuple[int, int, int]]:
    """Densify and prune one Gaussian component.

    Returns (new set, kept original row indices, number of appended rows,
    (cloned, split, pruned) counts). The kept/appended split is what the
    optimizer needs to carry its moments across the edit.
    """
    grads = stats.mean()
    max_scale = gauss.scales.detach().max(dim=-1).values
    opac = gauss.opacities.detach()

    hot = grads >= config.densify_grad_threshold
    clone_mask = hot & (max_scale <= config.densify_size_threshold)
    split_mask = hot & (max_scale > config.densify_size_threshold)
    prune_mask = opac < config.prune_opacity

    keep_mask = ~(split_mask | prune_mask)
    keep_idx = keep_mask.nonzero(as_tuple=True)[0]

    base = gauss.detached()
    kept = base.select(keep_idx)

    # Kept clones get the pair-preserving opacity; their copies are appended.
    clone_in_kept = clone_mask[keep_idx]
    if clone_in_kept.any():
        o = torch.sigmoid(kept.opacity_logits[clone_in_kept])
        adjusted = inverse_sigmoid((1.0 - torch.sqrt(1.0 - o)).clamp(1e-6, 1 - 1e-6))
        kept.opacity_logits = kept.opacity_logits.clone()
        kept.opacity_logits[clone_in_kept] = adjusted
        clones = kept.select(clone_in_kept.nonzero(as_tuple=True)[0])
    else:
        clones = None

    split_idx = (split_mask & ~prune_mask).nonzero(as_tuple=True)[0]
    children = None
    if split_idx.numel():
        parents = base.select(split_idx)
        reps = torch.repeat_interleave(torch.arange(len(parents)), SPLIT_CHILDREN)
        noise = torch.randn((len(reps), 3), dtype=base.dtype, generator=generator)
        R = quat_to_rotmat(parents.unit_rotations)[reps]
        offsets = (R @ (noise * parents.scales[reps]).unsqueeze(-1)).squeeze(-1)
        children = GaussianSet(
            parents.positions[reps] + offsets,
            parents.rotations[reps],
            parents.log_scales[reps] - torch.log(torch.tensor(SPLIT_SCALE_DIV, dtype=base.dtype)),
            parents.opacity_logits[reps],
            parents.sh[reps],
            None if parents.semantics is None else parents.semantics[reps],
        )

    parts = [kept] + [p for p in (clones, children) if p is not None]
    out = GaussianSet.cat(parts) if len(parts) > 1 else kept
    n_new = len(out) - len(kept)
    counts = (
        int(clone_mask[keep_idx].sum()),
        int(split_idx.numel()),
        int(prune_mask.sum()),
    )
    return out, keep_idx, n_new, counts


def densify_and_prune(
    scene,
    stats: dict[str, ComponentStats],
    config: TrainConfig,
    generator: torch.Generator,
    optimizer: AdamOptimizer | None = None,
) -> DensifyReport:
    """Apply adaptive control to every scene component in place."""
    report = DensifyReport()
    components = [("__background__", None)] + [(o.id, o) for o in scene.objects]
    for name, obj in components:
        st = stats.get(name)
        gauss = scene.background if obj is None else obj.gaussians
        if st is None or len(gauss) == 0:
            continue
        new_gauss, keep_idx, n_new, (c, s, p) = densify_component(gauss, st, config, generator)
        report.merge(name, c, s, p)

        for fname in ("positions", "rotations", "log_scales", "opacity_logits", "sh", "semantics"):
            t = getattr(new_gauss, fname)
            if t is None:
                continue
            t.requires_grad_(True)
            if optimizer is not None:
                optimizer.replace_param(f"{name}.{fname}", t, keep_rows=keep_idx, n_new=n_new)
        if obj is None:
            scene.background = new_gauss
        else:
            obj.gaussians = new_gauss
        stats[name] = ComponentStats.zeros(len(new_gauss), new_gauss.dtype)
    return report
