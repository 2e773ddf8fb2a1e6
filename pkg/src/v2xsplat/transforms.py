"""Quaternion and rigid-transform helpers (torch, batched, differentiable).

Quaternions are stored (w, x, y, z) and treated as unnormalized parameters;
every consumer normalizes before use.
"""

import torch
from torch import Tensor


def quat_normalize(q: Tensor, eps: float = 1e-12) -> Tensor:
    return q / q.norm(dim=-1, keepdim=True).clamp_min(eps)


def quat_to_rotmat(q: Tensor) -> Tensor:
    """Convert quaternions [..., 4] (w, x, y, z) to rotation matrices [..., 3, 3]."""
    q = quat_normalize(q)
    w, x, y, z = torch.unbind(q, dim=-1)
    R = torch.stack(
        [
            1 - 2 * (y * y + z * z),
            2 * (x * y - w * z),
            2 * (x * z + w * y),
            2 * (x * y + w * z),
            1 - 2 * (x * x + z * z),
            2 * (y * z - w * x),
            2 * (x * z - w * y),
            2 * (y * z + w * x),
            1 - 2 * (x * x + y * y),
        ],
        dim=-1,
    )
    return R.reshape(q.shape[:-1] + (3, 3))


def rotmat_to_quat(R: Tensor) -> Tensor:
    """Convert rotation matrices [..., 3, 3] to unit quaternions [..., 4].

    Uses the branch-free variant based on the largest diagonal element so the
    result is numerically stable for any proper rotation.
    """
    batch = R.shape[:-2]
    R = R.reshape(-1, 3, 3)
    m00, m01, m02 = R[:, 0, 0], R[:, 0, 1], R[:, 0, 2]
    m10, m11, m12 = R[:, 1, 0], R[:, 1, 1], R[:, 1, 2]
    m20, m21, m22 = R[:, 2, 0], R[:, 2, 1], R[:, 2, 2]

    # Four candidate constructions; pick the one with the largest pivot.
    qw = torch.stack([1 + m00 + m11 + m22, m21 - m12, m02 - m20, m10 - m01], dim=-1)
    qx = torch.stack([m21 - m12, 1 + m00 - m11 - m22, m01 + m10, m02 + m20], dim=-1)
    qy = torch.stack([m02 - m20, m01 + m10, 1 - m00 + m11 - m22, m12 + m21], dim=-1)
    qz = torch.stack([m10 - m01, m02 + m20, m12 + m21, 1 - m00 - m11 + m22], dim=-1)
    cand = torch.stack([qw, qx, qy, qz], dim=1)  # [N, 4, 4]

    pivots = torch.stack(
        [1 + m00 + m11 + m22, 1 + m00 - m11 - m22, 1 - m00 + m11 - m22, 1 - m00 - m11 + m22],
        dim=-1,
    )
    best = pivots.argmax(dim=-1)
    q = cand[torch.arange(R.shape[0]), best]
    q = quat_normalize(q)
    # Canonical sign: nonnegative w.
    q = torch.where(q[:, :1] < 0, -q, q)
    return q.reshape(batch + (4,))


def quat_multiply(a: Tensor, b: Tensor) -> Tensor:
    """Hamilton product a ⊗ b for [..., 4] quaternions (w, x, y, z)."""
    aw, ax, ay, az = torch.unbind(a, dim=-1)
    bw, bx, by, bz = torch.unbind(b, dim=-1)
    return torch.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        dim=-1,
    )


def axis_angle_to_quat(v: Tensor, eps: float = 1e-8) -> Tensor:
    """Rodrigues vector [..., 3] to quaternion; smooth through the identity.

    For small angles the sin(θ/2)/θ factor is replaced by its series so the
    map stays differentiable at v = 0 (identity-initialized corrections).
    """
    angle = v.norm(dim=-1, keepdim=True)
    half = 0.5 * angle
    small = angle < eps
    # sin(θ/2)/θ -> 1/2 - θ²/48 as θ -> 0
    factor = torch.where(small, 0.5 - angle * angle / 48.0, torch.sin(half) / angle.clamp_min(eps))
    w = torch.cos(half)
    xyz = v * factor
    return torch.cat([w, xyz], dim=-1)


def rotate_points(q: Tensor, points: Tensor) -> Tensor:
    """Rotate points [N, 3] by a single quaternion [4]."""
    R = quat_to_rotmat(q)
    return points @ R.transpose(-1, -2)


def transform_points(R: Tensor, t: Tensor, points: Tensor) -> Tensor:
    """Apply x -> R x + t to points [..., 3]."""
    return points @ R.transpose(-1, -2) + t
