"""Displacement fields, trilinear warping and Jacobian-determinant maps.

Fields live on the fixed grid with pull-back semantics::

    warped(x) = moving(x + u(x))

and are stored in voxel units, shape ``(3, nx, ny, nz)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import TooSmall
from .volume import Mask3, Volume3, _Geometry, _frozen, _vec3, check_geometry

VOXEL = "voxel"
MM = "mm"


@dataclass(frozen=True, eq=False)
class DisplacementField(_Geometry):
    units: str = VOXEL

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 4 or data.shape[0] != 3:
            raise ValueError(f"field data must have shape (3, nx, ny, nz), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("field data must be finite")
        if self.units not in (VOXEL, MM):
            raise ValueError(f"unknown field units {self.units!r}")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", _vec3(self.spacing))
        object.__setattr__(self, "origin", _vec3(self.origin))

    @classmethod
    def zeros(cls, like) -> "DisplacementField":
        return cls(np.zeros((3,) + like.dims), like.spacing, like.origin)

    @classmethod
    def constant(cls, like, vec) -> "DisplacementField":
        data = np.empty((3,) + like.dims)
        for c in range(3):
            data[c] = vec[c]
        return cls(data, like.spacing, like.origin)

    def with_data(self, data) -> "DisplacementField":
        return DisplacementField(data, self.spacing, self.origin, self.units)

    def norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.data * self.data, axis=0))


def identity_grid(dims: Sequence[int]) -> np.ndarray:
    return np.stack(np.meshgrid(*[np.arange(n, dtype=np.float64) for n in dims], indexing="ij"))


def sample(img: np.ndarray, positions: np.ndarray, clamp: bool = False) -> np.ndarray:
    """Trilinear samples of ``img`` at ``positions`` (shape ``(3, a, b, c)``)."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    px, py, pz = (np.ascontiguousarray(p, dtype=np.float64) for p in positions)
    out = np.empty(px.shape)
    _kernels.sample_at(img, px, py, pz, _kernels.CLAMP if clamp else _kernels.ZERO, out)
    return out


def warp_array(img: np.ndarray, u: np.ndarray) -> np.ndarray:
    img = np.ascontiguousarray(img, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    out = np.empty(img.shape)
    _kernels.warp_only(img, u, out)
    return out


def warp_array_with_gradient(img: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Warped image and the interpolant's spatial gradient at the sample points."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    out = np.empty(img.shape)
    grad = np.empty((3,) + img.shape)
    _kernels.warp_with_gradient(img, u, out, grad)
    return out, grad


def warp_trilinear(moving: Volume3, field: DisplacementField) -> Volume3:
    check_geometry(moving, field, "warp_trilinear")
    return moving.with_data(warp_array(moving.data, field.data))


def warp_mask(mask: Mask3, field: DisplacementField, threshold: float = 0.5) -> Mask3:
    check_geometry(mask, field, "warp_mask")
    warped = warp_array(mask.data.astype(np.float64), field.data)
    return mask.with_data(warped > threshold)


def jacobian_det_array(u: np.ndarray) -> np.ndarray:
    if min(u.shape[1:]) < 3:
        raise TooSmall(f"Jacobian needs at least 3 voxels per axis, got {u.shape[1:]}")
    # J[c][d] = delta_cd + du_c/dx_d; np.gradient: central inside, one-sided at the border
    J = [[None] * 3 for _ in range(3)]
    for c in range(3):
        grads = np.gradient(u[c], edge_order=1)
        for d in range(3):
            J[c][d] = grads[d] + (1.0 if c == d else 0.0)
    return (
        J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1])
        - J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0])
        + J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0])
    )


def jacobian_det_map(field: DisplacementField) -> Volume3:
    """Per-voxel ``det(I + grad u)``; values <= 0 mark folding."""
    return Volume3(jacobian_det_array(field.data), field.spacing, field.origin)


def compose_with_shift(field: DisplacementField, shift: Sequence[int]) -> DisplacementField:
    shift = np.asarray(_vec3(shift, int), dtype=np.float64)
    return field.with_data(field.data + shift[:, None, None, None])


def field_to_mm(field: DisplacementField) -> DisplacementField:
    if field.units == MM:
        return field
    sp = np.asarray(field.spacing)[:, None, None, None]
    return DisplacementField(field.data * sp, field.spacing, field.origin, MM)
