"""Left-atrium motion tracking in cine volumes by direct deformable registration."""

from .energy import LossBreakdown, bending_energy, similarity_mse, total_loss
from .errors import AtriaRegError
from .metrics import PhaseEvaluation, dice, evaluate_tracking, hausdorff_mm, mask_volume_ml
from .morphology import apply_mask, contour_band_mask, dilate_sphere, extract_contour
from .nifti import read_nifti, write_nifti
from .phantom import PhantomConfig, endpoint_error, generate_phantom
from .pipeline import preprocess_series
from .registration import RegistrationConfig, RegistrationResult, register_pair, track_cycle
from .reports import read_metrics_csv, write_metrics_csv
from .transform import DisplacementField, field_to_mm, jacobian_det_map, warp_mask, warp_trilinear
from .volume import CineSeries, Mask3, Volume3, crop_center, minmax_normalize, stabilize_centroid

__version__ = "0.1.0"

__all__ = [
    "AtriaRegError",
    "CineSeries",
    "DisplacementField",
    "LossBreakdown",
    "Mask3",
    "PhantomConfig",
    "PhaseEvaluation",
    "RegistrationConfig",
    "RegistrationResult",
    "Volume3",
    "apply_mask",
    "bending_energy",
    "contour_band_mask",
    "crop_center",
    "dice",
    "dilate_sphere",
    "endpoint_error",
    "evaluate_tracking",
    "extract_contour",
    "field_to_mm",
    "generate_phantom",
    "hausdorff_mm",
    "jacobian_det_map",
    "mask_volume_ml",
    "minmax_normalize",
    "preprocess_series",
    "read_metrics_csv",
    "read_nifti",
    "register_pair",
    "similarity_mse",
    "stabilize_centroid",
    "total_loss",
    "track_cycle",
    "warp_mask",
    "warp_trilinear",
    "write_metrics_csv",
    "write_nifti",
]
