"""Image I/O: 8-bit PNG for color/masks, 32-bit float PFM for depth/normals."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .errors import InvalidInputError


def write_png(path: str | os.PathLike, image: np.ndarray) -> None:
    """Write an image as 8-bit PNG.

    Float inputs are treated as [0, 1] and quantized; uint8 passes through.
    Accepts HxW (grayscale) or HxWx3.
    """
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = (np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(arr).save(path)


def read_png(path: str | os.PathLike) -> np.ndarray:
    """Read a PNG to float32 in [0, 1]; shape HxW or HxWx3."""
    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB" if "A" in img.mode or img.mode == "P" else "L")
    return np.asarray(img).astype(np.float32) / 255.0


def write_mask_png(path: str | os.PathLike, mask: np.ndarray) -> None:
    write_png(path, (np.asarray(mask) > 0).astype(np.uint8) * 255)


def read_mask_png(path: str | os.PathLike) -> np.ndarray:
    return read_png(path) > 0.5


def write_label_png(path: str | os.PathLike, labels: np.ndarray) -> None:
    """Write integer class labels (0..255) as 8-bit grayscale, no rescaling."""
    Image.fromarray(np.asarray(labels, dtype=np.uint8), mode="L").save(path)


def read_label_png(path: str | os.PathLike) -> np.ndarray:
    """Read 8-bit grayscale labels without normalization."""
    return np.asarray(Image.open(path).convert("L"), dtype=np.int64)


def write_pfm(path: str | os.PathLike, image: np.ndarray) -> None:
    """Write HxW or HxWx3 float32 data as PFM (little-endian, top-down rows
    flipped per the PFM bottom-up convention)."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        header = "Pf"
        h, w = arr.shape
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = "PF"
        h, w = arr.shape[:2]
    else:
        raise InvalidInputError(f"PFM supports HxW or HxWx3, got {arr.shape}")
    with open(path, "wb") as f:
        f.write(f"{header}\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.flipud(arr).astype("<f4").tobytes())


def read_pfm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().strip().decode("ascii")
        if header not in ("Pf", "PF"):
            raise InvalidInputError(f"{path}: not a PFM file")
        dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        channels = 3 if header == "PF" else 1
        data = np.frombuffer(f.read(), dtype=dtype, count=w * h * channels)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return np.flipud(data.reshape(shape)).astype(np.float32).copy()
