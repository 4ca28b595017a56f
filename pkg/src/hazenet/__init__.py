"""Patch-based single-image dehazing.

A small multi-scale convolutional network jointly estimates per-patch
transmittance and global environmental illumination; per-patch estimates
are aggregated, interpolated edge-aware across the image, and used to
invert the atmospheric scattering model.
"""

from .dehazer import DehazeResult, Dehazer, GroundTruthEstimator
from .estimator import JointHazeEstimator
from .haze import (
    MIN_AIRLIGHT,
    TRANSMITTANCE_FLOOR,
    recover_radiance,
    synthesize_haze,
    transmittance_from_depth,
)
from .interpolate import (
    ConvergenceError,
    InterpolationConfig,
    SmoothnessWeights,
    apply_system,
    build_weights,
    dense_system,
    solve_interpolation,
)
from .io import (
    CorruptFileError,
    ImageIOError,
    UnsupportedFormatError,
    read_gray,
    read_image,
    write_gray,
    write_image,
)
from .metrics import psnr, ssim
from .patches import (
    PatchSet,
    SparseEstimate,
    aggregate_estimates,
    extract_patches,
    patch_variances,
    variance_filter,
)
from .synth import (
    EmptyTrainingSetError,
    SceneItem,
    SynthConfig,
    build_training_set,
    label_patch,
    load_manifest,
    load_patches,
    normalize_depth,
    sample_haze_params,
    save_patches,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "CorruptFileError",
    "DehazeResult",
    "Dehazer",
    "EmptyTrainingSetError",
    "GroundTruthEstimator",
    "ImageIOError",
    "InterpolationConfig",
    "JointHazeEstimator",
    "MIN_AIRLIGHT",
    "PatchSet",
    "SceneItem",
    "SmoothnessWeights",
    "SparseEstimate",
    "SynthConfig",
    "TRANSMITTANCE_FLOOR",
    "UnsupportedFormatError",
    "aggregate_estimates",
    "apply_system",
    "build_training_set",
    "build_weights",
    "dense_system",
    "extract_patches",
    "label_patch",
    "load_manifest",
    "load_patches",
    "normalize_depth",
    "patch_variances",
    "psnr",
    "read_gray",
    "read_image",
    "recover_radiance",
    "sample_haze_params",
    "save_patches",
    "solve_interpolation",
    "ssim",
    "synthesize_haze",
    "transmittance_from_depth",
    "variance_filter",
    "write_gray",
    "write_image",
]
