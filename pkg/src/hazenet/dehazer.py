"""End-to-end single-image dehazing pipeline.

Steps: cut the hazy image into overlapping patches, drop low-variance
ones, run the estimator on the survivors, average the per-patch estimates
into a sparse transmittance map and one airlight, fill the gaps with the
edge-aware interpolator, and invert the scattering model.  If the
variance filter removes everything (a flat image), the pipeline falls
back to processing all patches and warns.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .haze import recover_radiance
from .interpolate import InterpolationConfig, solve_interpolation
from .patches import aggregate_estimates, extract_patches, variance_filter
from .validation import check_airlight, check_rgb_image, check_transmittance


@dataclass
class DehazeResult:
    """Everything the pipeline produced for one image.

    radiance is unclamped; values outside [0, 1] are only clipped when
    the image is written to disk.
    """

    radiance: np.ndarray
    transmittance: np.ndarray
    airlight: np.ndarray
    used_fallback: bool


class GroundTruthEstimator:
    """Oracle stand-in for the network when the true scene is known.

    Returns the mean of the reference transmittance map over each patch
    footprint and the reference airlight, regardless of pixel content.
    Useful for validating the rest of the pipeline in isolation.
    """

    def __init__(self, transmittance, airlight):
        self.transmittance = check_transmittance(transmittance)
        self.airlight = check_airlight(airlight)

    def predict_patches(self, pixels, origins, size):
        out = np.empty((len(origins), 4))
        for i, (row, col) in enumerate(origins):
            out[i, 0] = self.transmittance[row : row + size, col : col + size].mean()
        out[:, 1:] = self.airlight
        return out


class Dehazer(BaseEstimator, TransformerMixin):
    """Transformer-style front end for the dehazing pipeline.

    ``estimator`` is any object with ``predict(pixels) -> (n, 4)``;
    objects that also know patch geometry may instead provide
    ``predict_patches(pixels, origins, size)``.
    """

    def __init__(
        self,
        estimator=None,
        patch_size=15,
        stride=5,
        variance_threshold=0.002,
        lam=1e-2,
        eps_w=1e-4,
        cg_tol=1e-8,
        cg_max_iters=10000,
    ):
        self.estimator = estimator
        self.patch_size = patch_size
        self.stride = stride
        self.variance_threshold = variance_threshold
        self.lam = lam
        self.eps_w = eps_w
        self.cg_tol = cg_tol
        self.cg_max_iters = cg_max_iters

    def fit(self, X=None, y=None):
        """No-op; the patch estimator is fitted separately."""
        return self

    def transform(self, X):
        """Dehaze one (H, W, 3) image or a list of them."""
        if isinstance(X, np.ndarray) and X.ndim == 3:
            return self.dehaze(X).radiance
        return [self.dehaze(image).radiance for image in X]

    def dehaze(self, image):
        """Run the full pipeline on one hazy image."""
        if self.estimator is None:
            raise ValueError("no patch estimator configured")
        image = check_rgb_image(image)
        height, width = image.shape[:2]

        cut = extract_patches(image, self.patch_size, self.stride)
        kept = variance_filter(cut, self.variance_threshold)
        used_fallback = False
        if len(kept) == 0:
            warnings.warn(
                "variance filter removed every patch; processing all patches",
                RuntimeWarning,
                stacklevel=2,
            )
            kept = cut
            used_fallback = True

        estimates = self._predict(kept)
        sparse = aggregate_estimates(
            kept.origins, estimates[:, 0], estimates[:, 1:], height, width, self.patch_size
        )
        config = InterpolationConfig(
            lam=self.lam,
            eps_w=self.eps_w,
            cg_tol=self.cg_tol,
            cg_max_iters=self.cg_max_iters,
        )
        transmittance = solve_interpolation(sparse, image, config)
        radiance = recover_radiance(image, transmittance, sparse.airlight)
        return DehazeResult(radiance, transmittance, sparse.airlight, used_fallback)

    def _predict(self, patches):
        if hasattr(self.estimator, "predict_patches"):
            return np.asarray(
                self.estimator.predict_patches(patches.pixels, patches.origins, patches.size)
            )
        return np.asarray(self.estimator.predict(patches.pixels))
