"""Binary morphology used to build the contour band around a segmentation."""

from __future__ import annotations

import math

import numpy as np

from .volume import Mask3, Volume3, check_geometry

DEFAULT_BAND_RADIUS = 2.0

_FACE_OFFSETS = [
    (1, 0, 0), (-1, 0, 0),
    (0, 1, 0), (0, -1, 0),
    (0, 0, 1), (0, 0, -1),
]


def _shifted(a: np.ndarray, d, fill=False) -> np.ndarray:
    """Return ``b`` with ``b[x] = a[x + d]`` (``fill`` where out of range)."""
    out = np.full(a.shape, fill, dtype=a.dtype)
    dst, src = [], []
    for off, n in zip(d, a.shape):
        if abs(off) >= n:
            return out
        if off >= 0:
            dst.append(slice(0, n - off))
            src.append(slice(off, n))
        else:
            dst.append(slice(-off, n))
            src.append(slice(0, n + off))
    out[tuple(dst)] = a[tuple(src)]
    return out


def boundary(data: np.ndarray) -> np.ndarray:
    """Set voxels with at least one unset (or out-of-array) face neighbour."""
    data = np.asarray(data, dtype=bool)
    interior = data.copy()
    for d in _FACE_OFFSETS:
        interior &= _shifted(data, d, fill=False)
    return data & ~interior


def extract_contour(m: Mask3) -> Mask3:
    return m.with_data(boundary(m.data))


def ball_offsets(radius: float) -> list[tuple[int, int, int]]:
    """Integer offsets ``d`` with ``|d|^2 <= radius^2`` (closed ball)."""
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    r = int(math.floor(radius))
    r2 = radius * radius
    return [
        (a, b, c)
        for a in range(-r, r + 1)
        for b in range(-r, r + 1)
        for c in range(-r, r + 1)
        if a * a + b * b + c * c <= r2
    ]


def dilate_sphere(m: Mask3, radius_voxels: float) -> Mask3:
    """Dilate by a ball measured in index units; the result is clipped to the array."""
    src = m.data
    out = src.copy()
    for d in ball_offsets(radius_voxels):
        if d != (0, 0, 0):
            # out[x] |= src[x - d]  <=>  src[p] spreads to p + d
            out |= _shifted(src, tuple(-x for x in d), fill=False)
    return m.with_data(out)


def apply_mask(v: Volume3, m: Mask3) -> Volume3:
    check_geometry(v, m, "apply_mask")
    return v.with_data(np.where(m.data, v.data, 0.0))


def contour_band_mask(m: Mask3, radius_voxels: float = DEFAULT_BAND_RADIUS) -> Mask3:
    return dilate_sphere(extract_contour(m), radius_voxels)
