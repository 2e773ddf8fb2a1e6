"""Spherical-harmonic color evaluation for splatting, degrees 0..3."""

import torch
from torch import Tensor

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
]
C3 = [
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
]

MAX_DEGREE = 3


def num_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def eval_sh(degree: int, sh: Tensor, dirs: Tensor) -> Tensor:
    """Evaluate SH polynomials at unit directions.

    Args:
        degree: active degree, 0..3 (coefficients beyond it are ignored).
        sh: coefficients [..., C, num_coeffs] with C color channels.
        dirs: unit directions [..., 3].

    Returns:
        Raw (unshifted) channel values [..., C].
    """
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"SH degree must be 0..{MAX_DEGREE}, got {degree}")
    if sh.shape[-1] < num_coeffs(degree):
        raise ValueError(f"need {num_coeffs(degree)} coefficients for degree {degree}, got {sh.shape[-1]}")

    result = C0 * sh[..., 0]
    if degree > 0:
        x, y, z = dirs[..., 0:1], dirs[..., 1:2], dirs[..., 2:3]
        result = result - C1 * y * sh[..., 1] + C1 * z * sh[..., 2] - C1 * x * sh[..., 3]
        if degree > 1:
            xx, yy, zz = x * x, y * y, z * z
            xy, yz, xz = x * y, y * z, x * z
            result = (
                result
                + C2[0] * xy * sh[..., 4]
                + C2[1] * yz * sh[..., 5]
                + C2[2] * (2.0 * zz - xx - yy) * sh[..., 6]
                + C2[3] * xz * sh[..., 7]
                + C2[4] * (xx - yy) * sh[..., 8]
            )
            if degree > 2:
                result = (
                    result
                    + C3[0] * y * (3 * xx - yy) * sh[..., 9]
                    + C3[1] * xy * z * sh[..., 10]
                    + C3[2] * y * (4 * zz - xx - yy) * sh[..., 11]
                    + C3[3] * z * (2 * zz - 3 * xx - 3 * yy) * sh[..., 12]
                    + C3[4] * x * (4 * zz - xx - yy) * sh[..., 13]
                    + C3[5] * z * (xx - yy) * sh[..., 14]
                    + C3[6] * x * (xx - 3 * yy) * sh[..., 15]
                )
    return result


def eval_sh_color(degree: int, sh: Tensor, dirs: Tensor) -> Tensor:
    """SH evaluation with the splatting color convention: +0.5 shift, clamped ≥ 0.

    ``sh`` is [..., num_coeffs, 3]; returns rgb [..., 3].
    """
    raw = eval_sh(degree, sh.transpose(-1, -2), dirs)
    return torch.clamp_min(raw + 0.5, 0.0)


def rgb_to_sh_dc(rgb: Tensor) -> Tensor:
    return (rgb - 0.5) / C0


def sh_dc_to_rgb(dc: Tensor) -> Tensor:
    return dc * C0 + 0.5


def rotate_sh_deg1(sh: Tensor, R: Tensor) -> Tensor:
    """Rotate the degree-1 band of SH coefficients by rotation matrix R.

    The l=1 basis in the evaluation above is (-C1·y, C1·z, -C1·x) against
    coefficients (sh1, sh2, sh3), i.e. the radiance direction vector is
    w = (-sh3, -sh1, sh2). Rotating radiance by R means w' = R w. Bands with
    l ≥ 2 are returned unchanged (documented limitation for rotated assets;
    the default working degree is 1).

    Args:
        sh: [..., num_coeffs, 3]; returns a copy with coeffs 1..3 rotated.
        R: [3, 3] or [..., 3, 3] rotation.
    """
    if sh.shape[-2] < 4:
        return sh
    w = torch.stack([-sh[..., 3, :], -sh[..., 1, :], sh[..., 2, :]], dim=-2)  # [..., 3, C]
    w_rot = R @ w
    out = sh.clone()
    out[..., 1, :] = -w_rot[..., 1, :]
    out[..., 2, :] = w_rot[..., 2, :]
    out[..., 3, :] = -w_rot[..., 0, :]
    return out
