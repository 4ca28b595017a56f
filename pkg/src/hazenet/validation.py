"""Input validation helpers shared across the package.

All image-like inputs are plain numpy arrays: RGB images are ``(H, W, 3)``
float arrays with values nominally in [0, 1], gray maps (depth,
transmittance, masks) are ``(H, W)`` float arrays, and airlight is a
length-3 vector with channels in (0, 1].
"""

import numpy as np


def as_float_array(values, name="array"):
    """Convert to a float64 array, rejecting non-finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_rgb_image(image, name="image"):
    arr = as_float_array(image, name)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (height, width, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one pixel, got {arr.shape}")
    return arr


def check_gray_map(values, name="map"):
    arr = as_float_array(values, name)
    if arr.ndim != 2:
        raise ValueError(f"{name} must have shape (height, width), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one pixel, got {arr.shape}")
    return arr


def check_same_shape(a, b, name_a="first", name_b="second"):
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(
            f"dimension mismatch: {name_a} is {a.shape[:2]}, {name_b} is {b.shape[:2]}"
        )


def check_airlight(airlight, name="airlight"):
    arr = as_float_array(airlight, name)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a length-3 vector, got shape {arr.shape}")
    if np.any(arr <= 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} channels must lie in (0, 1], got {arr.tolist()}")
    return arr


def check_transmittance(values, name="transmittance"):
    arr = check_gray_map(values, name)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def check_scattering(beta, name="beta"):
    value = float(beta)
    if not np.isfinite(value) or value < 0.0:
        raise ValueError(f"{name} must be finite and >= 0, got {value}")
    return value
