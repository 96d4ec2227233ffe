"""Pairwise deformable registration and cine-cycle tracking.

The displacement field itself is the optimization variable.  Each
resolution level runs Adam on the total loss with a monotone safeguard:
a step that increases the loss is rolled back (moments included) and the
step size is halved.  The accepted loss sequence is therefore
non-increasing within a level.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .energy import MSE, LossBreakdown, loss_and_gradient
from .errors import AtriaRegError, ConfigInvalid, NonFiniteLoss, PhaseError, TooSmall
from .transform import DisplacementField, sample
from .volume import CineSeries, Volume3, check_geometry

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegistrationConfig:
    """Optimizer settings.

    ``step_size`` is the Adam learning rate in voxels of the level being
    optimized, so a level downsampled by ``f`` moves ``f`` times further
    per step when measured on the finest grid.  ``seed`` is carried for
    provenance; the optimizer itself draws no random numbers.
    """

    lam: float = 1.0
    levels: tuple[int, ...] = (4, 2, 1)
    max_iters_per_level: int = 300
    step_size: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    stop_rel_tol: float = 1e-5
    stop_window: int = 10
    seed: int = 0
    similarity: str = MSE
    warm_start: bool = True

    def __post_init__(self):
        levels = tuple(int(f) for f in self.levels)
        object.__setattr__(self, "levels", levels)
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigInvalid(f"lambda must be a finite value >= 0, got {self.lam}")
        if not levels or levels[-1] != 1 or min(levels) < 1:
            raise ConfigInvalid(f"levels must be positive and end with 1, got {levels}")
        if any(a <= b for a, b in zip(levels, levels[1:])):
            raise ConfigInvalid(f"levels must be strictly decreasing, got {levels}")
        if self.max_iters_per_level < 1 or self.stop_window < 1:
            raise ConfigInvalid("max_iters_per_level and stop_window must be >= 1")
        if not self.step_size > 0:
            raise ConfigInvalid(f"step_size must be positive, got {self.step_size}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ConfigInvalid("Adam betas must lie in [0, 1) and eps must be positive")
        if self.stop_rel_tol < 0:
            raise ConfigInvalid(f"stop_rel_tol must be >= 0, got {self.stop_rel_tol}")
        if self.similarity not in ("mse", "ncc"):
            raise ConfigInvalid(f"unknown similarity {self.similarity!r}")


@dataclass
class RegistrationResult:
    field: DisplacementField
    loss_trace: list[LossBreakdown]
    iterations_used: list[int]
    converged: bool
    initial_loss: list[LossBreakdown] = field(default_factory=list)

    def level_traces(self) -> list[list[LossBreakdown]]:
        out, start = [], 0
        for n in self.iterations_used:
            out.append(self.loss_trace[start:start + n])
            start += n
        return out

    @property
    def final_loss(self) -> LossBreakdown:
        return self.loss_trace[-1] if self.loss_trace else self.initial_loss[-1]


# -- pyramid helpers ------------------------------------------------------------

def level_dims(dims: Sequence[int], factor: int) -> tuple[int, ...]:
    return tuple(-(-n // factor) for n in dims)


def avg_pool(a: np.ndarray, factor: int) -> np.ndarray:
    """Average-pool the last three axes, zero-padding up to a multiple of ``factor``."""
    if factor == 1:
        return np.array(a, dtype=np.float64)
    lead = a.shape[:-3]
    dims = a.shape[-3:]
    padded = level_dims(dims, factor)
    buf = np.zeros(lead + tuple(n * factor for n in padded))
    buf[(...,) + tuple(slice(0, n) for n in dims)] = a
    shape = lead + sum(((n, factor) for n in padded), ())
    axes = tuple(len(lead) + 2 * i + 1 for i in range(3))
    return buf.reshape(shape).mean(axis=axes)


def _level_positions(dims_to: Sequence[int], f_to: int, f_from: int) -> np.ndarray:
    """Voxel centres of the ``f_to`` grid expressed in ``f_from`` grid coordinates."""
    axes = []
    for n in dims_to:
        finest = f_to * np.arange(n, dtype=np.float64) + (f_to - 1) / 2.0
        axes.append((finest - (f_from - 1) / 2.0) / f_from)
    return np.stack(np.meshgrid(*axes, indexing="ij"))


def prolong_field(u: np.ndarray, f_from: int, f_to: int, dims_to: Sequence[int]) -> np.ndarray:
    """Trilinearly resample a level-``f_from`` field onto the level-``f_to`` grid,
    rescaling magnitudes to the finer voxel size."""
    pos = _level_positions(dims_to, f_to, f_from)
    ratio = f_from / f_to
    return np.stack([ratio * sample(u[c], pos, clamp=True) for c in range(3)])


def restrict_field(u: np.ndarray, factor: int) -> np.ndarray:
    return avg_pool(u, factor) / factor


# -- optimizer -------------------------------------------------------------------

def _optimize_level(moving, fixed, u, cfg: RegistrationConfig, lr: float, max_iters: int):
    loss, grad = loss_and_gradient(moving, fixed, u, cfg.lam, cfg.similarity)
    if not math.isfinite(loss.total):
        raise NonFiniteLoss(f"initial loss is {loss.total}")
    initial = loss
    m = np.zeros_like(u)
    v = np.zeros_like(u)
    t = 0
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    trace: list[LossBreakdown] = []
    converged = False
    rejected = 0
    for _ in range(max_iters):
        t_new = t + 1
        m_new = b1 * m + (1.0 - b1) * grad
        v_new = b2 * v + (1.0 - b2) * (grad * grad)
        step = (lr / (1.0 - b1 ** t_new)) * m_new / (np.sqrt(v_new / (1.0 - b2 ** t_new)) + cfg.adam_eps)
        u_new = u - step
        loss_new, grad_new = loss_and_gradient(moving, fixed, u_new, cfg.lam, cfg.similarity)
        if not math.isfinite(loss_new.total):
            raise NonFiniteLoss(f"loss became {loss_new.total}; reduce step_size or raise lambda")
        if loss_new.total <= loss.total:
            u, loss, grad = u_new, loss_new, grad_new
            m, v, t = m_new, v_new, t_new
        else:
            lr *= 0.5
            rejected += 1
        trace.append(loss)
        w = cfg.stop_window
        if len(trace) > w:
            old = trace[-1 - w].total
            if old - loss.total <= cfg.stop_rel_tol * abs(old):
                converged = True
                break
        if loss.total == 0.0:
            converged = True
            break
    logger.debug("level done: %d steps, %d rejected, final lr %.3g", len(trace), rejected, lr)
    return u, trace, initial, converged


def register_pair(
    moving: Volume3,
    fixed: Volume3,
    init: Optional[DisplacementField] = None,
    cfg: RegistrationConfig = RegistrationConfig(),
) -> RegistrationResult:
    """Estimate the pull-back field taking ``moving`` onto ``fixed``.

    Coarse-to-fine over ``cfg.levels``; ``init`` (finest-grid voxel units)
    seeds the coarsest level.
    """
    check_geometry(moving, fixed, "register_pair")
    if init is not None:
        check_geometry(moving, init, "register_pair init")
    dims = moving.dims
    for f in cfg.levels:
        if min(level_dims(dims, f)) < 3:
            raise TooSmall(f"level factor {f} leaves fewer than 3 voxels on an axis of {dims}")

    u = None
    trace, iters, initial = [], [], []
    converged = False
    prev_f = None
    for f in cfg.levels:
        mov = avg_pool(moving.data, f)
        fix = avg_pool(fixed.data, f)
        ldims = mov.shape
        if prev_f is None:
            u = restrict_field(init.data, f) if init is not None else np.zeros((3,) + ldims)
        else:
            u = prolong_field(u, prev_f, f, ldims)
        u, level_trace, level_init, converged = _optimize_level(
            mov, fix, u, cfg, cfg.step_size, cfg.max_iters_per_level
        )
        logger.debug(
            "level %d: %d iterations, loss %.6g -> %.6g",
            f, len(level_trace), level_init.total,
            level_trace[-1].total if level_trace else level_init.total,
        )
        trace.extend(level_trace)
        iters.append(len(level_trace))
        initial.append(level_init)
        prev_f = f

    out = DisplacementField(u[(slice(None),) + tuple(slice(0, n) for n in dims)], moving.spacing, moving.origin)
    return RegistrationResult(out, trace, iters, converged, initial)


def track_cycle(
    series: CineSeries,
    cfg: RegistrationConfig = RegistrationConfig(),
    callback: Optional[Callable[[int, RegistrationResult], None]] = None,
) -> list[RegistrationResult]:
    """Register the reference phase (moving) to every phase (fixed), in order.

    With ``cfg.warm_start`` the phase ``t`` run starts from the phase ``t-1``
    solution.
    """
    series.require_masks()
    if series.reference != 0:
        raise ConfigInvalid("tracking expects phase 0 as the reference")
    moving = series.phases[0]
    results: list[RegistrationResult] = []
    for t, fixed in enumerate(series.phases):
        init = results[-1].field if (cfg.warm_start and results) else None
        try:
            res = register_pair(moving, fixed, init, cfg)
        except AtriaRegError as exc:
            raise PhaseError(t, exc) from exc
        logger.info(
            "phase %02d: iterations %s, final loss %.6g", t, res.iterations_used, res.final_loss.total
        )
        results.append(res)
        if callback is not None:
            callback(t, res)
    return results


def with_overrides(cfg: RegistrationConfig, **kw) -> RegistrationConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
