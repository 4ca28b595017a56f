"""Full-reference image quality metrics.

Both metrics assume images normalized to [0, 1] (peak value 1.0).  PSNR of
identical images is reported as ``math.inf``.  SSIM follows the standard
definition: 11x11 Gaussian window with sigma 1.5, stability constants
(0.01)^2 and (0.03)^2, computed on the luminance channel
0.299 R + 0.587 G + 0.114 B, averaged over all fully-contained windows.
"""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .validation import check_rgb_image, check_same_shape

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

LUMINANCE_WEIGHTS = np.array([0.299, 0.587, 0.114])


def psnr(reference, test):
    """Peak signal-to-noise ratio in dB; ``math.inf`` when the images match."""
    reference = check_rgb_image(reference, "reference")
    test = check_rgb_image(test, "test")
    check_same_shape(reference, test, "reference", "test")
    mse = np.mean((reference - test) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim(reference, test):
    """Mean structural similarity over luminance; result lies in [-1, 1]."""
    reference = check_rgb_image(reference, "reference")
    test = check_rgb_image(test, "test")
    check_same_shape(reference, test, "reference", "test")
    height, width = reference.shape[:2]
    if min(height, width) < SSIM_WINDOW:
        raise ValueError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM, got {height}x{width}"
        )
    x = luminance(reference)
    y = luminance(test)
    window = gaussian_window(SSIM_WINDOW, SSIM_SIGMA)

    wins_x = sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW))
    wins_y = sliding_window_view(y, (SSIM_WINDOW, SSIM_WINDOW))
    mu_x = np.einsum("ijkl,kl->ij", wins_x, window)
    mu_y = np.einsum("ijkl,kl->ij", wins_y, window)
    xx = np.einsum("ijkl,kl->ij", wins_x * wins_x, window)
    yy = np.einsum("ijkl,kl->ij", wins_y * wins_y, window)
    xy = np.einsum("ijkl,kl->ij", wins_x * wins_y, window)
    var_x = xx - mu_x**2
    var_y = yy - mu_y**2
    cov_xy = xy - mu_x * mu_y

    numerator = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov_xy + SSIM_C2)
    denominator = (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(numerator / denominator))


def luminance(image):
    """Project an RGB image onto the luminance channel."""
    return image @ LUMINANCE_WEIGHTS


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    """Normalized 2-D Gaussian weights (sums to 1)."""
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()
