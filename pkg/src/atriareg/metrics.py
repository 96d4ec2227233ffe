"""Tracking evaluation: Dice, Hausdorff distance (mm), volumes, Jacobians."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BothEmpty, EmptyMask
from .morphology import boundary
from .transform import jacobian_det_array, warp_mask
from .volume import CineSeries, Mask3, check_geometry

_CHUNK = 2048


@dataclass(frozen=True)
class PhaseEvaluation:
    phase: int
    dice: float
    hausdorff_mm: float
    gt_volume_ml: float
    warped_volume_ml: float
    mean_jacobian: float


def dice(a: Mask3, b: Mask3) -> float:
    check_geometry(a, b, "dice")
    na, nb = a.count, b.count
    if na + nb == 0:
        raise BothEmpty("Dice of two empty masks is undefined")
    inter = int(np.count_nonzero(a.data & b.data))
    return 2.0 * inter / (na + nb)


def _directed(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """For each point of ``src``, the distance to the nearest point of ``dst``."""
    out = np.empty(len(src))
    for start in range(0, len(src), _CHUNK):
        block = src[start:start + _CHUNK]
        best = np.full(len(block), np.inf)
        for s2 in range(0, len(dst), _CHUNK):
            diff = block[:, None, :] - dst[None, s2:s2 + _CHUNK, :]
            best = np.minimum(best, np.einsum("ijk,ijk->ij", diff, diff).min(axis=1))
        out[start:start + _CHUNK] = best
    return np.sqrt(out)


def hausdorff_mm(a: Mask3, b: Mask3, percentile: float = 100.0) -> float:
    """Symmetric Hausdorff distance between the boundary voxel sets, in mm.

    Exhaustive over boundary pairs.  ``percentile < 100`` gives the
    robust variant (e.g. 95) using the pooled directed distances.
    """
    check_geometry(a, b, "hausdorff_mm")
    if not a.data.any() or not b.data.any():
        raise EmptyMask("Hausdorff distance needs two non-empty masks")
    sp = np.asarray(a.spacing)
    pa = np.argwhere(boundary(a.data)) * sp
    pb = np.argwhere(boundary(b.data)) * sp
    dab = _directed(pa, pb)
    dba = _directed(pb, pa)
    if percentile >= 100.0:
        return float(max(dab.max(), dba.max()))
    return float(max(np.percentile(dab, percentile), np.percentile(dba, percentile)))


def mask_volume_ml(m: Mask3) -> float:
    return m.count * float(np.prod(m.spacing)) / 1000.0


def evaluate_tracking(series: CineSeries, results: Sequence, percentile: float = 100.0) -> list[PhaseEvaluation]:
    """Warp the reference mask with each phase's field and score it against that phase's mask.

    ``results`` holds ``RegistrationResult`` objects or bare displacement fields.
    """
    masks = series.require_masks()
    if len(results) != len(masks):
        raise ValueError(f"{len(results)} results for {len(masks)} phases")
    ref = masks[series.reference]
    rows = []
    for t, (gt, res) in enumerate(zip(masks, results)):
        fld = getattr(res, "field", res)
        warped = warp_mask(ref, fld)
        jac = jacobian_det_array(fld.data)
        mean_jac = float(np.mean(jac[warped.data])) if warped.data.any() else float("nan")
        rows.append(PhaseEvaluation(
            phase=t,
            dice=dice(warped, gt),
            hausdorff_mm=hausdorff_mm(warped, gt, percentile) if warped.data.any() and gt.data.any() else float("inf"),
            gt_volume_ml=mask_volume_ml(gt),
            warped_volume_ml=mask_volume_ml(warped),
            mean_jacobian=mean_jac,
        ))
    return rows
