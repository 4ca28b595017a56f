"""Overlapping patch extraction, filtering, and estimate aggregation.

Images are cut into ``size x size`` patches on a regular ``stride`` grid.
If the grid does not reach the bottom/right edge, one extra origin is
appended per axis at ``length - size`` so that every pixel is covered by
at least one patch.  Per-patch scalar estimates are averaged back per
pixel over all covering footprints, producing a sparse map plus a
coverage mask; per-patch airlight vectors are averaged into one global
vector.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .haze import clamp_airlight
from .validation import as_float_array, check_rgb_image

DEFAULT_PATCH_SIZE = 15
DEFAULT_STRIDE = 5
DEFAULT_VARIANCE_THRESHOLD = 0.002

# Estimates may stray outside [0, 1] by at most this much before being rejected.
T_INPUT_SLACK = 1e-6


@dataclass
class PatchSet:
    """A batch of patches: pixel blocks, their origins, optional labels.

    pixels:  (n, size, size, 3) float64
    origins: (n, 2) int array of (row, col) top-left corners
    labels:  optional (n, 4) float64, columns (t, a_r, a_g, a_b)
    """

    pixels: np.ndarray
    origins: np.ndarray
    labels: np.ndarray | None = None

    def __len__(self):
        return self.pixels.shape[0]

    @property
    def size(self):
        return self.pixels.shape[1]

    def subset(self, index):
        labels = None if self.labels is None else self.labels[index]
        return PatchSet(self.pixels[index], self.origins[index], labels)


@dataclass
class SparseEstimate:
    """Aggregated per-pixel transmittance with its coverage mask and airlight.

    t_tilde: (H, W) mean transmittance where mask is 1 (0 elsewhere, unused)
    mask:    (H, W) float array with values in {0, 1}
    airlight: (3,) global illumination estimate
    """

    t_tilde: np.ndarray
    mask: np.ndarray
    airlight: np.ndarray


def grid_origins(length, size, stride):
    """1-D patch origins: the stride grid plus a final edge-aligned origin."""
    if length < size:
        raise ValueError(f"image extent {length} is smaller than patch size {size}")
    origins = list(range(0, length - size + 1, stride))
    if origins[-1] != length - size:
        origins.append(length - size)
    return origins


def extract_patches(image, size=DEFAULT_PATCH_SIZE, stride=DEFAULT_STRIDE):
    """Cut an image into overlapping patches in row-major origin order."""
    image = check_rgb_image(image)
    if size < 1 or stride < 1:
        raise ValueError("size and stride must be >= 1")
    height, width = image.shape[:2]
    rows = grid_origins(height, size, stride)
    cols = grid_origins(width, size, stride)
    windows = sliding_window_view(image, (size, size), axis=(0, 1))
    blocks = windows[np.ix_(rows, cols)]  # (nr, nc, 3, size, size)
    pixels = np.ascontiguousarray(blocks.transpose(0, 1, 3, 4, 2)).reshape(
        len(rows) * len(cols), size, size, 3
    )
    origins = np.array([(r, c) for r in rows for c in cols], dtype=np.int64)
    return PatchSet(pixels, origins)


def patch_variances(pixels):
    """Variance of the channel-mean intensity within each patch."""
    gray = pixels.mean(axis=3)
    return gray.reshape(gray.shape[0], -1).var(axis=1)


def variance_filter(patches, threshold=DEFAULT_VARIANCE_THRESHOLD):
    """Keep patches whose intensity variance exceeds the threshold."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    keep = patch_variances(patches.pixels) > threshold
    return patches.subset(keep)


def aggregate_estimates(origins, t_values, airlights, height, width, size=DEFAULT_PATCH_SIZE):
    """Average per-patch estimates into a sparse map and one airlight.

    Each patch contributes its scalar transmittance to every pixel of its
    footprint; covered pixels take the mean of all contributions.  The
    global airlight is the unweighted mean of the per-patch vectors,
    clamped per channel into (0, 1].
    """
    origins = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
    t_values = as_float_array(t_values, "t_values").reshape(-1)
    airlights = as_float_array(airlights, "airlights").reshape(-1, 3)
    if len(origins) == 0:
        raise ValueError("cannot aggregate an empty estimate list")
    if not (len(origins) == len(t_values) == len(airlights)):
        raise ValueError("origins, t_values, and airlights must have equal length")
    if np.any(t_values < -T_INPUT_SLACK) or np.any(t_values > 1.0 + T_INPUT_SLACK):
        raise ValueError("transmittance estimates must lie in [0, 1]")
    t_values = np.clip(t_values, 0.0, 1.0)
    if np.any(origins < 0) or np.any(origins[:, 0] + size > height) or np.any(
        origins[:, 1] + size > width
    ):
        raise ValueError("patch footprint falls outside the image")

    total = np.zeros((height, width))
    count = np.zeros((height, width))
    for (row, col), value in zip(origins, t_values):
        total[row : row + size, col : col + size] += value
        count[row : row + size, col : col + size] += 1.0
    covered = count > 0
    t_tilde = np.zeros((height, width))
    t_tilde[covered] = total[covered] / count[covered]
    airlight = clamp_airlight(airlights.mean(axis=0))
    return SparseEstimate(t_tilde, covered.astype(np.float64), airlight)
