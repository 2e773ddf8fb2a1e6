"""Training configuration.

The seven loss weights have no published reference values; the defaults below
were chosen so each term lands within two orders of magnitude of the color
loss on the bundled toy scene. Override them per dataset via JSON or TOML.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from ..errors import InvalidInputError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version shim
    import tomli as tomllib


@dataclass
class TrainConfig:
    # Loss weights λ1..λ7 (depth, normal, sky, semantic, scale, ratio, reg).
    lambda_depth: float = 0.1
    lambda_normal: float = 0.05
    lambda_sky: float = 0.05
    lambda_semantic: float = 0.1
    lambda_scale: float = 100.0
    lambda_ratio: float = 0.1
    lambda_reg: float = 0.01

    iterations: int = 50_000

    # Per-group learning rates.
    lr_position: float = 2e-4
    lr_rotation: float = 1e-3
    lr_scale: float = 5e-3
    lr_opacity: float = 5e-2
    lr_sh: float = 2.5e-3
    lr_semantic: float = 1e-2
    lr_pose_correction: float = 5e-4
    lr_fourier: float = 2.5e-3
    lr_appearance: float = 1e-2

    # Adaptive density control; interval 0 disables it.
    densify_interval: int = 500
    densify_start: int = 500
    densify_stop: int = 15_000
    densify_grad_threshold: float = 2e-4
    densify_size_threshold: float = 0.5  # meters: clone at/below, split above
    prune_opacity: float = 0.005

    # Appearance decoupling (per-image affine color grid).
    appearance_enabled: bool = True
    appearance_grid: tuple[int, int] = (8, 8)

    # Color loss mix; SSIM participation is toggleable.
    l1_weight: float = 0.8
    ssim_weight: float = 0.2
    ssim_in_color: bool = True

    # Reduction over Gaussians for the geometric losses (mean or sum).
    geo_loss_reduction: str = "mean"

    sh_degree_interval: int = 1000  # raise active SH degree every k iterations
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    seed: int = 0
    eval_interval: int = 500
    holdout: Optional[list[tuple[str, int]]] = None  # (view, frame) pairs excluded from training
    log_path: Optional[str] = None  # CSV metrics destination

    def __post_init__(self):
        for name in (
            "lambda_depth",
            "lambda_normal",
            "lambda_sky",
            "lambda_semantic",
            "lambda_scale",
            "lambda_ratio",
            "lambda_reg",
        ):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"TrainConfig: {name} must be >= 0")
        if self.iterations < 0:
            raise InvalidInputError("TrainConfig: iterations must be >= 0")
        if self.geo_loss_reduction not in ("mean", "sum"):
            raise InvalidInputError("TrainConfig: geo_loss_reduction must be 'mean' or 'sum'")
        self.appearance_grid = tuple(int(v) for v in self.appearance_grid)
        if min(self.appearance_grid) < 1:
            raise InvalidInputError("TrainConfig: appearance grid must be at least 1x1")
        self.background = tuple(float(v) for v in self.background)
        if self.holdout is not None:
            if self.holdout and isinstance(self.holdout[0], (str, int)):
                self.holdout = [self.holdout]  # single (view, frame) pair
            self.holdout = [(str(v), int(f)) for v, f in self.holdout]

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=1))

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        p = Path(path)
        if p.suffix.lower() == ".toml":
            data = tomllib.loads(p.read_text())
        else:
            data = json.loads(p.read_text())
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"TrainConfig: unknown keys {sorted(unknown)}")
        return cls(**data)
