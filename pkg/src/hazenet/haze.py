"""The atmospheric scattering model.

A hazy observation is a per-pixel convex combination of the clear scene
radiance and a global illumination color: ``I = J * t + (1 - t) * A``,
where the transmittance ``t = exp(-beta * depth)`` is shared by all three
channels.  Recovery inverts the model with the transmittance bounded below
by 0.1 so dense-haze regions do not blow up noise.
"""

import numpy as np

from .validation import (
    as_float_array,
    check_airlight,
    check_gray_map,
    check_rgb_image,
    check_same_shape,
    check_scattering,
    check_transmittance,
)

# Lower bound applied to the transmittance when inverting the model.
TRANSMITTANCE_FLOOR = 0.1

# Smallest admissible airlight channel; keeps clamped values inside (0, 1].
MIN_AIRLIGHT = 1e-6


def transmittance_from_depth(depth, beta):
    """Per-pixel transmittance ``exp(-beta * depth)`` for homogeneous haze."""
    depth = check_gray_map(depth, "depth")
    if np.any(depth < 0.0):
        raise ValueError("depth values must be >= 0")
    beta = check_scattering(beta)
    return np.exp(-beta * depth)


def synthesize_haze(clear, transmittance, airlight):
    """Apply the scattering model to a clear image."""
    clear = check_rgb_image(clear, "clear")
    transmittance = check_transmittance(transmittance)
    check_same_shape(clear, transmittance, "clear", "transmittance")
    airlight = check_airlight(airlight)
    t = transmittance[:, :, None]
    return clear * t + (1.0 - t) * airlight


def recover_radiance(hazy, transmittance, airlight):
    """Invert the scattering model.

    The result is intentionally not clamped to [0, 1]; out-of-gamut values
    are only clipped when an image is written to disk.
    """
    hazy = check_rgb_image(hazy, "hazy")
    transmittance = check_transmittance(transmittance)
    check_same_shape(hazy, transmittance, "hazy", "transmittance")
    airlight = check_airlight(airlight)
    t = np.maximum(TRANSMITTANCE_FLOOR, transmittance)[:, :, None]
    return airlight + (hazy - airlight) / t


def clamp_airlight(airlight):
    """Clamp a raw 3-vector into the admissible airlight range (0, 1]."""
    arr = as_float_array(airlight, "airlight")
    return np.clip(arr, MIN_AIRLIGHT, 1.0)
