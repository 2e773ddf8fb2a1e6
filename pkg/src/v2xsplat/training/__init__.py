from .adam import AdamOptimizer, adam_step
from .appearance import AppearanceGrids, appearance_correct
from .config import TrainConfig
from .densify import DensifyReport, densify_and_prune
from .loop import train
from .losses import (
    loss_color,
    loss_depth,
    loss_normal,
    loss_reg,
    loss_semantic,
    loss_sky,
    ssim_torch,
    total_loss,
)
from .samples import FrameSample

__all__ = [
    "AdamOptimizer",
    "adam_step",
    "AppearanceGrids",
    "appearance_correct",
    "TrainConfig",
    "DensifyReport",
    "densify_and_prune",
    "train",
    "FrameSample",
    "loss_color",
    "loss_depth",
    "loss_normal",
    "loss_reg",
    "loss_semantic",
    "loss_sky",
    "ssim_torch",
    "total_loss",
]
