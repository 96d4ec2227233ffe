"""Volume, mask and cine-series containers plus the preprocessing steps
(cropping, centroid stabilization, min-max normalization).

Arrays are indexed ``[i, j, k]`` with shape ``(nx, ny, nz)``.  The x-fastest
linear order only matters on disk and is handled by :mod:`atriareg.nifti`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConstantIntensity, EmptyMask, GeometryMismatch, MissingMasks

Vec3 = tuple[float, float, float]
IVec3 = tuple[int, int, int]

_GEOM_RTOL = 1e-5


def _vec3(v, cast=float):
    t = tuple(cast(x) for x in v)
    if len(t) != 3:
        raise ValueError(f"expected a 3-vector, got {v!r}")
    return t


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class _Geometry:
    data: np.ndarray
    spacing: Vec3 = (1.0, 1.0, 1.0)
    origin: Vec3 = (0.0, 0.0, 0.0)

    @property
    def dims(self) -> IVec3:
        return tuple(int(n) for n in self.data.shape[-3:])

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.dims))

    def same_geometry(self, other) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, rtol=_GEOM_RTOL, atol=0)
            and np.allclose(self.origin, other.origin, rtol=_GEOM_RTOL, atol=_GEOM_RTOL)
        )

    def geometry(self) -> dict:
        return {"spacing": self.spacing, "origin": self.origin}


@dataclass(frozen=True, eq=False)
class Volume3(_Geometry):
    """Dense 3D scalar image; spacing in mm/voxel, origin in mm."""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"Volume3 data must be a non-empty 3D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("Volume3 data must be finite")
        spacing = _vec3(self.spacing)
        if min(spacing) <= 0:
            raise ValueError(f"spacing must be positive, got {spacing}")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", _vec3(self.origin))

    def with_data(self, data) -> "Volume3":
        return Volume3(data, self.spacing, self.origin)


@dataclass(frozen=True, eq=False)
class Mask3(_Geometry):
    """Binary volume sharing the geometry of the image it annotates."""

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"Mask3 data must be a non-empty 3D array, got shape {data.shape}")
        spacing = _vec3(self.spacing)
        if min(spacing) <= 0:
            raise ValueError(f"spacing must be positive, got {spacing}")
        object.__setattr__(self, "data", _frozen(data.astype(bool)))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", _vec3(self.origin))

    def with_data(self, data) -> "Mask3":
        return Mask3(data, self.spacing, self.origin)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.data))


@dataclass(frozen=True, eq=False)
class CineSeries:
    """Ordered phases (default 20) with optional per-phase masks."""

    phases: tuple[Volume3, ...]
    masks: Optional[tuple[Mask3, ...]] = None
    reference: int = 0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        phases = tuple(self.phases)
        if not phases:
            raise ValueError("CineSeries needs at least one phase")
        first = phases[0]
        for p in phases[1:]:
            if not first.same_geometry(p):
                raise GeometryMismatch("all phases must share dims/spacing/origin")
        object.__setattr__(self, "phases", phases)
        if self.masks is not None:
            masks = tuple(self.masks)
            if len(masks) != len(phases):
                raise ValueError(f"{len(masks)} masks for {len(phases)} phases")
            for m in masks:
                if not first.same_geometry(m):
                    raise GeometryMismatch("mask geometry differs from phase geometry")
            object.__setattr__(self, "masks", masks)
        if not 0 <= self.reference < len(phases):
            raise ValueError(f"reference index {self.reference} outside [0, {len(phases)})")

    def __len__(self) -> int:
        return len(self.phases)

    def require_masks(self) -> tuple[Mask3, ...]:
        if self.masks is None:
            raise MissingMasks("series has no segmentation masks")
        return self.masks


def check_geometry(a, b, what: str = "inputs") -> None:
    if not a.same_geometry(b):
        raise GeometryMismatch(
            f"{what}: dims {a.dims}/{b.dims}, spacing {a.spacing}/{b.spacing}, "
            f"origin {a.origin}/{b.origin}"
        )


def minmax_normalize(v: Volume3) -> Volume3:
    lo = float(v.data.min())
    hi = float(v.data.max())
    if hi == lo:
        raise ConstantIntensity(f"constant intensity {lo}")
    out = (v.data - lo) / (hi - lo)
    # guard the end points against rounding in the division
    out[v.data == lo] = 0.0
    out[v.data == hi] = 1.0
    return v.with_data(out)


def _copy_window(src: np.ndarray, start: Sequence[int], size: Sequence[int]) -> np.ndarray:
    """Copy ``src[start : start + size]`` with zero fill outside ``src``."""
    out = np.zeros(tuple(size), dtype=src.dtype)
    dst_sl, src_sl = [], []
    for s, n, dim in zip(start, size, src.shape):
        lo = max(s, 0)
        hi = min(s + n, dim)
        if hi <= lo:
            return out
        src_sl.append(slice(lo, hi))
        dst_sl.append(slice(lo - s, hi - s))
    out[tuple(dst_sl)] = src[tuple(src_sl)]
    return out


def crop_center(v, center: Sequence[float], size: Sequence[int]):
    """Crop a window of ``size`` voxels around ``center`` (works for masks too).

    ``center`` is rounded to the nearest voxel; the window starts at
    ``center - size // 2``.  Source voxels outside the input are zero.
    The origin moves with the window so physical coordinates are preserved.
    """
    size = _vec3(size, int)
    if min(size) <= 0:
        raise ValueError(f"crop size must be positive, got {size}")
    c = [int(np.rint(x)) for x in center]
    start = [ci - si // 2 for ci, si in zip(c, size)]
    out = _copy_window(v.data, start, size)
    origin = tuple(o + sp * st for o, sp, st in zip(v.origin, v.spacing, start))
    return type(v)(out, v.spacing, origin)


def translate(v, shift: Sequence[int]):
    """Integer translation: ``out[x + shift] = in[x]``; vacated voxels are 0."""
    shift = _vec3(shift, int)
    start = [-s for s in shift]
    return v.with_data(_copy_window(v.data, start, v.dims))


def mask_centroid(m: Mask3) -> np.ndarray:
    idx = np.argwhere(m.data)
    if idx.size == 0:
        raise EmptyMask("centroid of an empty mask")
    return idx.mean(axis=0)


def stabilize_centroid(series: CineSeries) -> tuple[CineSeries, list[IVec3]]:
    """Translate every phase so its mask centroid sits on the reference one.

    Returns the new series and the integer shift applied to each phase.
    """
    masks = series.require_masks()
    ref = mask_centroid(masks[series.reference])
    shifts, phases, new_masks = [], [], []
    for vol, m in zip(series.phases, masks):
        shift = tuple(int(s) for s in np.rint(ref - mask_centroid(m)))
        shifts.append(shift)
        if shift == (0, 0, 0):
            phases.append(vol)
            new_masks.append(m)
        else:
            phases.append(translate(vol, shift))
            new_masks.append(translate(m, shift))
    meta = dict(series.metadata)
    meta["stabilization_shifts"] = [list(s) for s in shifts]
    out = CineSeries(tuple(phases), tuple(new_masks), series.reference, meta)
    return out, shifts
