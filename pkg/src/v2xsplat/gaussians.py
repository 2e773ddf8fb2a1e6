"""Gaussian primitives: covariance construction, scale canonicalization, and
the two geometric losses that flatten splats into thin circular disks.

Storage follows the usual splatting parameterization: scales are kept in log
space and opacity as a pre-sigmoid logit so optimization is unconstrained;
the physical values are exposed through properties.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor

from . import sh as shlib
from .errors import InvalidInputError
from .transforms import quat_normalize, quat_to_rotmat, rotmat_to_quat


def _as_tensor(x, dtype=None) -> Tensor:
    t = torch.as_tensor(x)
    if dtype is not None:
        t = t.to(dtype)
    elif not t.is_floating_point():
        t = t.to(torch.get_default_dtype())
    return t


def build_covariance(rotation: Tensor, scale: Tensor) -> Tensor:
    """Σ = R S Sᵀ Rᵀ for quaternion(s) [..., 4] and scale(s) [..., 3].

    Returns [..., 3, 3] symmetric positive-definite matrices whose eigenvalues
    are the squared scales.
    """
    rotation = _as_tensor(rotation)
    scale = _as_tensor(scale, rotation.dtype)
    if not torch.isfinite(rotation).all() or not torch.isfinite(scale).all():
        raise InvalidInputError("build_covariance: non-finite rotation or scale")
    if (scale <= 0).any():
        raise InvalidInputError("build_covariance: scales must be strictly positive")
    R = quat_to_rotmat(rotation)
    M = R * scale[..., None, :]
    cov = M @ M.transpose(-1, -2)
    return 0.5 * (cov + cov.transpose(-1, -2))


def canonicalize_scales(rotation: Tensor, scale: Tensor) -> tuple[Tensor, Tensor]:
    """Reorder scales descending (s1 ≥ s2 ≥ s3) with a matching rotation.

    Rotation columns are permuted together with the scale entries so the
    covariance is unchanged; when the permutation is odd the last column is
    negated to keep det(R) = +1. Ties keep their original order (stable sort).
    """
    rotation = _as_tensor(rotation)
    scale = _as_tensor(scale, rotation.dtype)
    scale_sorted, order = torch.sort(scale, dim=-1, descending=True, stable=True)
    R = quat_to_rotmat(rotation)
    R_perm = torch.gather(R, -1, order.unsqueeze(-2).expand_as(R))
    # An odd column permutation flips the determinant; fix the last column.
    parity = torch.det(R_perm)
    R_perm = torch.cat([R_perm[..., :2], R_perm[..., 2:] * parity.sign()[..., None, None]], dim=-1)
    return rotmat_to_quat(R_perm), scale_sorted


def loss_scale(scale: Tensor, reduction: str = "mean") -> Tensor:
    """|min(s1, s2, s3)| per Gaussian, driving the thinnest axis to zero."""
    scale = _as_tensor(scale)
    per = scale.min(dim=-1).values.abs()
    return _reduce(per, reduction)


def loss_ratio(scale: Tensor, reduction: str = "mean") -> Tensor:
    """max(1, s1/s2) − 1 on the two longest axes, pushing splats circular.

    Scales are sorted internally (stable, descending) so the s1 ≥ s2
    precondition always holds; at s1 = s2 the subgradient is 0.
    """
    scale = _as_tensor(scale)
    s_sorted = torch.sort(scale, dim=-1, descending=True, stable=True).values
    s1, s2 = s_sorted[..., 0], s_sorted[..., 1]
    if (s2 == 0).any():
        raise InvalidInputError("loss_ratio: second-longest scale is zero")
    per = torch.relu(s1 / s2 - 1.0)
    return _reduce(per, reduction)


def _reduce(per: Tensor, reduction: str) -> Tensor:
    if reduction == "mean":
        return per.mean() if per.numel() else per.new_zeros(())
    if reduction == "sum":
        return per.sum()
    if reduction == "none":
        return per
    raise InvalidInputError(f"unknown reduction '{reduction}'")


def inverse_sigmoid(x: Tensor) -> Tensor:
    return torch.log(x / (1.0 - x))


@dataclass
class Gaussian:
    """A single Gaussian, mostly a convenience view for tests and docs."""

    position: Tensor  # (3,) world meters
    rotation: Tensor  # (4,) unit quaternion (w, x, y, z)
    scale: Tensor  # (3,) positive lengths, meters
    opacity: float  # in (0, 1)
    sh: Tensor  # (num_coeffs, 3)
    semantic: Optional[Tensor] = None  # (K,) logits

    def __post_init__(self):
        self.position = _as_tensor(self.position)
        self.rotation = quat_normalize(_as_tensor(self.rotation))
        self.scale = _as_tensor(self.scale)
        self.sh = _as_tensor(self.sh)
        if (self.scale <= 0).any():
            raise InvalidInputError("Gaussian: scales must be strictly positive")
        if not (0.0 < self.opacity < 1.0):
            raise InvalidInputError("Gaussian: opacity must lie in (0, 1)")

    def covariance(self) -> Tensor:
        return build_covariance(self.rotation, self.scale)

    def canonicalized(self) -> "Gaussian":
        q, s = canonicalize_scales(self.rotation, self.scale)
        return Gaussian(self.position, q, s, self.opacity, self.sh, self.semantic)


class GaussianSet:
    """Structure-of-arrays container for N Gaussians.

    Fields (all torch tensors, shared dtype):
        positions      (N, 3)
        rotations      (N, 4)  unnormalized quaternions
        log_scales     (N, 3)
        opacity_logits (N,)    pre-sigmoid
        sh             (N, num_coeffs, 3)
        semantics      (N, K) logits, or None

    Safe for concurrent reads; mutation requires exclusive access.
    """

    FIELDS = ("positions", "rotations", "log_scales", "opacity_logits", "sh", "semantics")

    def __init__(self, positions, rotations, log_scales, opacity_logits, sh, semantics=None):
        self.positions = _as_tensor(positions)
        dtype = self.positions.dtype
        self.rotations = _as_tensor(rotations, dtype)
        self.log_scales = _as_tensor(log_scales, dtype)
        self.opacity_logits = _as_tensor(opacity_logits, dtype).reshape(-1)
        self.sh = _as_tensor(sh, dtype)
        self.semantics = None if semantics is None else _as_tensor(semantics, dtype)
        self.validate()

    # -- construction -----------------------------------------------------

    @classmethod
    def from_physical(cls, positions, rotations, scales, opacities, sh, semantics=None) -> "GaussianSet":
        """Build from physical-space scales (meters) and opacities in (0, 1)."""
        scales = _as_tensor(scales)
        opac = _as_tensor(opacities).reshape(-1)
        if (scales <= 0).any():
            raise InvalidInputError("GaussianSet: scales must be strictly positive")
        if ((opac <= 0) | (opac >= 1)).any():
            raise InvalidInputError("GaussianSet: opacities must lie in (0, 1)")
        return cls(positions, rotations, torch.log(scales), inverse_sigmoid(opac), sh, semantics)

    @classmethod
    def empty(cls, sh_degree: int = 1, semantic_classes: int = 0, dtype=torch.float32) -> "GaussianSet":
        C = shlib.num_coeffs(sh_degree)
        sem = torch.zeros((0, semantic_classes), dtype=dtype) if semantic_classes else None
        return cls(
            torch.zeros((0, 3), dtype=dtype),
            torch.zeros((0, 4), dtype=dtype),
            torch.zeros((0, 3), dtype=dtype),
            torch.zeros((0,), dtype=dtype),
            torch.zeros((0, C, 3), dtype=dtype),
            sem,
        )

    # -- invariants --------------------------------------------------------

    def validate(self):
        n = len(self)
        shapes_ok = (
            self.positions.shape == (n, 3)
            and self.rotations.shape == (n, 4)
            and self.log_scales.shape == (n, 3)
            and self.opacity_logits.shape == (n,)
            and self.sh.ndim == 3
            and self.sh.shape[0] == n
            and self.sh.shape[2] == 3
        )
        if not shapes_ok:
            raise InvalidInputError("GaussianSet: field arrays disagree on N or shape")
        if self.semantics is not None and (self.semantics.ndim != 2 or self.semantics.shape[0] != n):
            raise InvalidInputError("GaussianSet: semantics must be (N, K)")
        c = self.sh.shape[1]
        if c not in {shlib.num_coeffs(d) for d in range(shlib.MAX_DEGREE + 1)}:
            raise InvalidInputError(f"GaussianSet: {c} SH coefficients is not a full degree block")

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def dtype(self):
        return self.positions.dtype

    @property
    def sh_degree(self) -> int:
        return int(round(self.sh.shape[1] ** 0.5)) - 1

    @property
    def semantic_classes(self) -> int:
        return 0 if self.semantics is None else self.semantics.shape[1]

    # -- physical views ----------------------------------------------------

    @property
    def scales(self) -> Tensor:
        return torch.exp(self.log_scales)

    @property
    def opacities(self) -> Tensor:
        return torch.sigmoid(self.opacity_logits)

    @property
    def unit_rotations(self) -> Tensor:
        return quat_normalize(self.rotations)

    def covariances(self) -> Tensor:
        return build_covariance(self.unit_rotations, self.scales)

    def canonicalized(self) -> "GaussianSet":
        """Return a copy with scales sorted descending per Gaussian."""
        q, s = canonicalize_scales(self.unit_rotations, self.scales)
        return GaussianSet(self.positions, q, torch.log(s), self.opacity_logits, self.sh, self.semantics)

    # -- manipulation ------------------------------------------------------

    def clone(self) -> "GaussianSet":
        sem = None if self.semantics is None else self.semantics.clone()
        return GaussianSet(
            self.positions.clone(),
            self.rotations.clone(),
            self.log_scales.clone(),
            self.opacity_logits.clone(),
            self.sh.clone(),
            sem,
        )

    def detached(self) -> "GaussianSet":
        sem = None if self.semantics is None else self.semantics.detach()
        return GaussianSet(
            self.positions.detach(),
            self.rotations.detach(),
            self.log_scales.detach(),
            self.opacity_logits.detach(),
            self.sh.detach(),
            sem,
        )

    def to(self, dtype) -> "GaussianSet":
        sem = None if self.semantics is None else self.semantics.to(dtype)
        return GaussianSet(
            self.positions.to(dtype),
            self.rotations.to(dtype),
            self.log_scales.to(dtype),
            self.opacity_logits.to(dtype),
            self.sh.to(dtype),
            sem,
        )

    def select(self, mask_or_index) -> "GaussianSet":
        sem = None if self.semantics is None else self.semantics[mask_or_index]
        return GaussianSet(
            self.positions[mask_or_index],
            self.rotations[mask_or_index],
            self.log_scales[mask_or_index],
            self.opacity_logits[mask_or_index],
            self.sh[mask_or_index],
            sem,
        )

    def __getitem__(self, i: int) -> Gaussian:
        sem = None if self.semantics is None else self.semantics[i]
        return Gaussian(
            self.positions[i],
            self.unit_rotations[i],
            self.scales[i],
            float(self.opacities[i]),
            self.sh[i],
            sem,
        )

    @staticmethod
    def cat(sets: list["GaussianSet"]) -> "GaussianSet":
        if not sets:
            raise InvalidInputError("GaussianSet.cat: empty list")
        has_sem = sets[0].semantics is not None
        if any((g.semantics is not None) != has_sem for g in sets):
            raise InvalidInputError("GaussianSet.cat: mixed semantic presence")
        if len({g.sh.shape[1] for g in sets}) != 1:
            raise InvalidInputError("GaussianSet.cat: mixed SH degrees")
        sem = torch.cat([g.semantics for g in sets]) if has_sem else None
        return GaussianSet(
            torch.cat([g.positions for g in sets]),
            torch.cat([g.rotations for g in sets]),
            torch.cat([g.log_scales for g in sets]),
            torch.cat([g.opacity_logits for g in sets]),
            torch.cat([g.sh for g in sets]),
            sem,
        )
