from .annotations import AnnotationRecord, export_annotations, write_kitti_labels
from .assets import fit_asset_to_box
from .corner_cases import CornerCase, box_surface_points, detect_corner_cases, visibility_in_view
from .generate import paste_ego, render_v2x, write_dataset
from .metrics import psnr, ssim

__all__ = [
    "AnnotationRecord",
    "export_annotations",
    "write_kitti_labels",
    "fit_asset_to_box",
    "CornerCase",
    "box_surface_points",
    "detect_corner_cases",
    "visibility_in_view",
    "paste_ego",
    "render_v2x",
    "write_dataset",
    "psnr",
    "ssim",
]
