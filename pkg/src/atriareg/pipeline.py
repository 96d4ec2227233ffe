"""Preprocessing chain applied to a raw cine series before tracking."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .morphology import DEFAULT_BAND_RADIUS, apply_mask, contour_band_mask
from .transform import DisplacementField, compose_with_shift
from .volume import CineSeries, crop_center, mask_centroid, minmax_normalize, stabilize_centroid, translate, Volume3

DEFAULT_CROP = (96, 96, 36)


def preprocess_series(
    series: CineSeries,
    crop: Sequence[int] = DEFAULT_CROP,
    band_radius: float = DEFAULT_BAND_RADIUS,
) -> CineSeries:
    """Crop around the reference segmentation, stabilize the centroid,
    min-max normalize, and keep only the dilated contour band of each phase.

    The returned series carries the cropped, stabilized masks (used as
    ground truth downstream) and records the crop centre and per-phase
    shifts in ``metadata``.
    """
    masks = series.require_masks()
    center = [int(round(c)) for c in mask_centroid(masks[series.reference])]
    cropped = CineSeries(
        tuple(crop_center(v, center, crop) for v in series.phases),
        tuple(crop_center(m, center, crop) for m in masks),
        series.reference,
        dict(series.metadata),
    )
    stable, shifts = stabilize_centroid(cropped)
    phases = []
    for vol, m in zip(stable.phases, stable.masks):
        band = contour_band_mask(m, band_radius)
        phases.append(apply_mask(minmax_normalize(vol), band))
    meta = dict(stable.metadata)
    meta.update({
        "crop_center_voxels": center,
        "crop_size": list(crop),
        "band_radius_voxels": band_radius,
        "stabilization_shifts": [list(s) for s in shifts],
        "reference": series.reference,
    })
    return CineSeries(tuple(phases), stable.masks, series.reference, meta)


def preprocess_field(field: DisplacementField, metadata: dict, phase: int) -> DisplacementField:
    """Map a raw-frame pull-back field for ``phase`` into the preprocessed frame.

    With fixed' = fixed shifted by d_t and moving' = moving shifted by d_ref,
    the field becomes u'(x) = u(x - d_t) + (d_ref - d_t).
    """
    shifts = metadata["stabilization_shifts"]
    d_t, d_ref = shifts[phase], shifts[metadata.get("reference", 0)]
    comps = []
    for c in range(3):
        comp = Volume3(field.data[c], field.spacing, field.origin)
        comp = crop_center(comp, metadata["crop_center_voxels"], metadata["crop_size"])
        comps.append(translate(comp, d_t))
    out = DisplacementField(np.stack([c.data for c in comps]), comps[0].spacing, comps[0].origin, field.units)
    return compose_with_shift(out, [r - t for r, t in zip(d_ref, d_t)])
