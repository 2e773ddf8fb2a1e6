"""PLY I/O for GaussianSet using the de-facto splatting attribute layout.

Attributes per vertex: x, y, z, nx, ny, nz (zeros, kept for viewer
compatibility), f_dc_0..2, f_rest_* (channel-major), opacity (pre-sigmoid),
scale_0..2 (log space), rot_0..3 (w, x, y, z). Optional semantic logits are
stored as sem_0..K-1. Files are written binary little-endian; both binary
little-endian and ascii are accepted on read.
"""

from __future__ import annotations

import os

import numpy as np
import torch

from .errors import InvalidInputError
from .gaussians import GaussianSet
from . import sh as shlib


def _attribute_names(num_coeffs: int, semantic_classes: int) -> list[str]:
    names = ["x", "y", "z", "nx", "ny", "nz"]
    names += [f"f_dc_{i}" for i in range(3)]
    names += [f"f_rest_{i}" for i in range(3 * (num_coeffs - 1))]
    names += ["opacity"]
    names += [f"scale_{i}" for i in range(3)]
    names += [f"rot_{i}" for i in range(4)]
    names += [f"sem_{i}" for i in range(semantic_classes)]
    return names


def save_gaussians_ply(gauss: GaussianSet, path: str | os.PathLike) -> None:
    n = len(gauss)
    c = gauss.sh.shape[1]
    k = gauss.semantic_classes
    names = _attribute_names(c, k)

    xyz = gauss.positions.detach().cpu().numpy().astype(np.float32)
    normals = np.zeros_like(xyz)
    f_dc = gauss.sh[:, 0, :].detach().cpu().numpy().astype(np.float32)
    # (N, C-1, 3) -> (N, 3, C-1) -> flat, matching the common channel-major layout
    f_rest = gauss.sh[:, 1:, :].transpose(1, 2).reshape(n, -1).detach().cpu().numpy().astype(np.float32)
    opacity = gauss.opacity_logits.detach().cpu().numpy().astype(np.float32)[:, None]
    scales = gauss.log_scales.detach().cpu().numpy().astype(np.float32)
    rots = gauss.rotations.detach().cpu().numpy().astype(np.float32)
    cols = [xyz, normals, f_dc, f_rest, opacity, scales, rots]
    if k:
        cols.append(gauss.semantics.detach().cpu().numpy().astype(np.float32))
    data = np.concatenate(cols, axis=1)

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in names]
    header += ["end_header"]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def load_gaussians_ply(path: str | os.PathLike) -> GaussianSet:
    with open(path, "rb") as f:
        raw = f.read()

    end = raw.find(b"end_header")
    if end < 0:
        raise InvalidInputError(f"{path}: not a PLY file (no end_header)")
    header_lines = raw[:end].decode("ascii", errors="replace").splitlines()
    body = raw[end:]
    body = body[body.find(b"\n") + 1 :]

    fmt = None
    count = None
    names: list[str] = []
    for line in header_lines:
        parts = line.strip().split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element" and parts[1] == "vertex":
            count = int(parts[2])
        elif parts[0] == "property" and len(parts) == 3:
            names.append(parts[2])
    if fmt not in ("binary_little_endian", "ascii") or count is None:
        raise InvalidInputError(f"{path}: unsupported PLY header")

    if fmt == "binary_little_endian":
        table = np.frombuffer(body, dtype="<f4", count=count * len(names)).reshape(count, len(names))
    else:
        table = np.loadtxt(body.decode("ascii").splitlines(), dtype=np.float32, max_rows=count)
        table = table.reshape(count, len(names))

    col = {name: i for i, name in enumerate(names)}

    def take(keys: list[str]) -> np.ndarray:
        return table[:, [col[k] for k in keys]]

    required = ["x", "y", "z", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    missing = [k for k in required if k not in col]
    if missing:
        raise InvalidInputError(f"{path}: missing attributes {missing}")

    rest_names = sorted((n for n in names if n.startswith("f_rest_")), key=lambda s: int(s.rsplit("_", 1)[1]))
    n_rest = len(rest_names) // 3
    n_coeffs = n_rest + 1
    if n_coeffs not in {shlib.num_coeffs(d) for d in range(shlib.MAX_DEGREE + 1)}:
        raise InvalidInputError(f"{path}: f_rest count {len(rest_names)} is not a full SH degree block")

    sh = np.zeros((count, n_coeffs, 3), dtype=np.float32)
    sh[:, 0, :] = take(["f_dc_0", "f_dc_1", "f_dc_2"])
    if n_rest:
        rest = take(rest_names).reshape(count, 3, n_rest)
        sh[:, 1:, :] = rest.transpose(0, 2, 1)

    sem_names = sorted((n for n in names if n.startswith("sem_")), key=lambda s: int(s.rsplit("_", 1)[1]))
    semantics = torch.from_numpy(take(sem_names).copy()) if sem_names else None

    return GaussianSet(
        torch.from_numpy(take(["x", "y", "z"]).copy()),
        torch.from_numpy(take(["rot_0", "rot_1", "rot_2", "rot_3"]).copy()),
        torch.from_numpy(take(["scale_0", "scale_1", "scale_2"]).copy()),
        torch.from_numpy(table[:, col["opacity"]].copy()),
        torch.from_numpy(sh),
        semantics,
    )
