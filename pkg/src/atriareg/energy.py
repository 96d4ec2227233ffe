"""Registration objective: image similarity + bending-energy regularizer.

Reductions have a fixed order: ``np.sum`` (blocked pairwise) over
fixed-shape float64 arrays, and for the bending kernel a sequential sum
per (component, x-slab) followed by ``np.sum`` over the slabs.  Repeated evaluations
are therefore bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import TooSmall
from .transform import DisplacementField, warp_array_with_gradient
from .volume import Volume3, check_geometry

MSE = "mse"
NCC = "ncc"


@dataclass(frozen=True)
class LossBreakdown:
    similarity: float
    bending: float
    lam: float
    total: float

    @classmethod
    def compose(cls, similarity: float, bending: float, lam: float) -> "LossBreakdown":
        return cls(float(similarity), float(bending), float(lam), float(similarity + lam * bending))


# -- similarity -------------------------------------------------------------

def mse_array(warped: np.ndarray, fixed: np.ndarray) -> tuple[float, np.ndarray]:
    r = warped - fixed
    n = r.size
    return float(np.sum(r * r)) / n, (2.0 / n) * r


def ncc_array(warped: np.ndarray, fixed: np.ndarray) -> tuple[float, np.ndarray]:
    """``1 - NCC`` (global normalized cross-correlation) and its gradient."""
    a = warped - np.sum(warped) / warped.size
    b = fixed - np.sum(fixed) / fixed.size
    na = np.sqrt(np.sum(a * a))
    nb = np.sqrt(np.sum(b * b))
    if na == 0.0 or nb == 0.0:
        return 1.0, np.zeros_like(warped)
    ncc = float(np.sum(a * b)) / (na * nb)
    grad = -(b / (na * nb) - ncc * a / (na * na))
    return 1.0 - ncc, grad


_SIMILARITIES = {MSE: mse_array, NCC: ncc_array}


def similarity_mse(warped: Volume3, fixed: Volume3) -> tuple[float, Volume3]:
    check_geometry(warped, fixed, "similarity_mse")
    value, grad = mse_array(warped.data, fixed.data)
    return value, warped.with_data(grad)


# -- bending energy -----------------------------------------------------------

def bending_array(u: np.ndarray, with_gradient: bool = True):
    """Discrete bending energy of a ``(3, nx, ny, nz)`` field.

    Second differences use the 3-point central stencil on the unit grid and
    only exist where the stencil fits; border voxels contribute nothing.
    The gradient is the exact adjoint ``(2/N) * sum_k w_k L_k^T L_k u``.
    """
    dims = u.shape[1:]
    if min(dims) < 3:
        raise TooSmall(f"bending energy needs at least 3 voxels per axis, got {dims}")
    n = int(np.prod(dims))
    u = np.ascontiguousarray(u, dtype=np.float64)
    grad = np.zeros_like(u)
    partial = np.empty((3, dims[0]))
    _kernels.bending(u, grad, partial)
    value = float(np.sum(partial)) / n
    if not with_gradient:
        return value, None
    grad *= 2.0 / n
    return value, grad


def bending_energy(field: DisplacementField) -> tuple[float, DisplacementField]:
    value, grad = bending_array(field.data)
    return value, field.with_data(grad)


# -- total ----------------------------------------------------------------------

def loss_and_gradient(
    moving: np.ndarray,
    fixed: np.ndarray,
    u: np.ndarray,
    lam: float,
    similarity: str = MSE,
) -> tuple[LossBreakdown, np.ndarray]:
    """Array-level objective used inside the optimizer loop."""
    warped, dwarp = warp_array_with_gradient(moving, u)
    sim, dsim = _SIMILARITIES[similarity](warped, fixed)
    grad = dwarp * dsim[None]
    if lam > 0:
        bend, dbend = bending_array(u)
        grad += lam * dbend
    else:
        bend, _ = bending_array(u, with_gradient=False)
    return LossBreakdown.compose(sim, bend, lam), grad


def total_loss(
    moving: Volume3,
    fixed: Volume3,
    field: DisplacementField,
    lam: float,
    similarity: str = MSE,
) -> tuple[LossBreakdown, DisplacementField]:
    check_geometry(moving, fixed, "total_loss")
    check_geometry(moving, field, "total_loss")
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    breakdown, grad = loss_and_gradient(moving.data, fixed.data, field.data, lam, similarity)
    return breakdown, field.with_data(grad)
