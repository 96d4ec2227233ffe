"""Synthetic cine series with analytic ground truth.

An ellipsoidal "atrium" is scaled about a fixed centre by ``s_t``.  The
scale curve rises from 1 at phase 0 to ``peak_scale`` at ``peak_phase``
and falls back towards 1 at the end of the cycle::

    s_t = 1 + (peak - 1) * sin^2(pi/2 * t / peak_phase)              t <= peak_phase
    s_t = 1 + (peak - 1) * sin^2(pi/2 * (P - t) / (P - peak_phase))  t >  peak_phase

Phase ``t`` content is phase 0 content mapped through ``c + s_t (x - c)``,
so the pull-back field that warps phase 0 onto phase ``t`` is
``u_t(x) = (1/s_t - 1) (x - c)`` (voxel units).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigInvalid, EmptyMask
from .transform import DisplacementField, identity_grid
from .volume import CineSeries, Mask3, Volume3, check_geometry

SCALE_CURVE = (
    "s_t = 1 + (peak_scale-1)*sin^2(pi/2*t/peak_phase) for t <= peak_phase; "
    "s_t = 1 + (peak_scale-1)*sin^2(pi/2*(P-t)/(P-peak_phase)) for t > peak_phase"
)
FALLOFF_VOXELS = 2.0


@dataclass(frozen=True)
class PhantomConfig:
    dims: tuple[int, int, int] = (96, 96, 36)
    spacing: tuple[float, float, float] = (1.72, 1.72, 2.0)
    phases: int = 20
    base_radii_voxels: tuple[float, float, float] = (18.0, 15.0, 10.0)
    center: Optional[tuple[float, float, float]] = None
    peak_scale: float = 1.25
    peak_phase: int = 8
    noise_sigma: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if len(self.dims) != 3 or min(self.dims) < 3:
            raise ConfigInvalid(f"dims must be three values >= 3, got {self.dims}")
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise ConfigInvalid(f"spacing must be positive, got {self.spacing}")
        if self.phases < 1:
            raise ConfigInvalid(f"need at least one phase, got {self.phases}")
        if min(self.base_radii_voxels) <= 0:
            raise ConfigInvalid(f"radii must be positive, got {self.base_radii_voxels}")
        if not self.peak_scale > 1:
            raise ConfigInvalid(f"peak_scale must exceed 1, got {self.peak_scale}")
        if self.phases > 1 and not 0 < self.peak_phase < self.phases:
            raise ConfigInvalid(f"peak_phase must lie in (0, {self.phases}), got {self.peak_phase}")
        if self.noise_sigma < 0:
            raise ConfigInvalid(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @property
    def center_voxels(self) -> np.ndarray:
        if self.center is None:
            return np.array([n / 2 for n in self.dims], dtype=np.float64)
        return np.asarray(self.center, dtype=np.float64)


def scale_curve(cfg: PhantomConfig) -> np.ndarray:
    t = np.arange(cfg.phases, dtype=np.float64)
    amp = cfg.peak_scale - 1.0
    if cfg.phases == 1:
        return np.ones(1)
    rise = np.sin(0.5 * np.pi * t / cfg.peak_phase) ** 2
    fall = np.sin(0.5 * np.pi * (cfg.phases - t) / (cfg.phases - cfg.peak_phase)) ** 2
    s = 1.0 + amp * np.where(t <= cfg.peak_phase, rise, fall)
    s[0] = 1.0
    s[cfg.peak_phase] = cfg.peak_scale
    return s


def _profile(rel: np.ndarray, radii: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Intensity and inside-indicator for positions ``rel`` relative to the centre
    of an ellipsoid with semi-axes ``radii`` (phase-0 frame)."""
    rho = np.sqrt(sum((rel[a] / radii[a]) ** 2 for a in range(3)))
    inside = rho <= 1.0
    r = np.sqrt(sum(rel[a] ** 2 for a in range(3)))
    with np.errstate(divide="ignore", invalid="ignore"):
        # distance outside the surface, measured along the ray from the centre
        d = np.where(rho > 0, r * (1.0 - 1.0 / rho), -np.inf)
    ramp = 0.5 * (1.0 + np.cos(np.pi * np.clip(d, 0.0, FALLOFF_VOXELS) / FALLOFF_VOXELS))
    intensity = np.where(d <= 0, 1.0, ramp)
    return intensity, inside


def generate_phantom(cfg: PhantomConfig = PhantomConfig()) -> tuple[CineSeries, list[DisplacementField]]:
    c = cfg.center_voxels
    radii = np.asarray(cfg.base_radii_voxels, dtype=np.float64)
    grid = identity_grid(cfg.dims)
    rel = grid - c[:, None, None, None]
    rng = np.random.default_rng(cfg.seed)
    scales = scale_curve(cfg)

    phases, masks, fields = [], [], []
    for s in scales:
        intensity, _ = _profile(rel / s, radii)
        # mask from the scaled ellipsoid directly (no division round-off at rho == 1)
        inside = sum((rel[a] / (s * radii[a])) ** 2 for a in range(3)) <= 1.0
        if cfg.noise_sigma > 0:
            intensity = intensity + rng.normal(0.0, cfg.noise_sigma, size=cfg.dims)
        phases.append(Volume3(intensity, cfg.spacing))
        masks.append(Mask3(inside, cfg.spacing))
        fields.append(DisplacementField((1.0 / s - 1.0) * rel, cfg.spacing))
        if s == 1.0:
            fields[-1] = DisplacementField.zeros(phases[-1])

    meta = {
        "generator": "ellipsoid-scaling phantom",
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
        "center_voxels": c.tolist(),
        "scale_curve_formula": SCALE_CURVE,
        "scales": scales.tolist(),
        "field_units": "voxel",
        "field_convention": "pull-back: phase_t(x) ~ phase_0(x + u_t(x))",
    }
    return CineSeries(tuple(phases), tuple(masks), 0, meta), fields


def endpoint_error(
    estimated: DisplacementField, truth: DisplacementField, region: Mask3
) -> tuple[float, float]:
    """Mean and max Euclidean endpoint error (voxel units) over ``region``."""
    check_geometry(estimated, truth, "endpoint_error")
    check_geometry(estimated, region, "endpoint_error")
    if not region.data.any():
        raise EmptyMask("endpoint error over an empty region")
    diff = estimated.data - truth.data
    err = np.sqrt(np.sum(diff * diff, axis=0))[region.data]
    return float(np.mean(err)), float(np.max(err))
