"""Image file I/O.

Supported formats:

* RGB images: PNG (8- or 16-bit per channel) and binary PPM (P6, maxval 255).
* Gray maps (depth, transmittance): PNG (8/16-bit single channel) and
  binary PGM (P5, maxval 255 or 65535).

Pixel values are scaled to [0, 1] on read (by 255 or 65535 depending on
bit depth) and quantized with round-half-to-even on write.  Failure modes
are reported distinctly: missing files raise ``FileNotFoundError``,
unknown extensions or unsupported layouts raise ``UnsupportedFormatError``
and undecodable content raises ``CorruptFileError``.
"""

import os

import cv2
import numpy as np

from .validation import check_gray_map, check_rgb_image

RGB_EXTENSIONS = {".png", ".ppm"}
GRAY_EXTENSIONS = {".png", ".pgm"}


class ImageIOError(Exception):
    """Base class for image file errors."""


class UnsupportedFormatError(ImageIOError):
    """The file extension or pixel layout is not supported."""


class CorruptFileError(ImageIOError):
    """The file exists but its content cannot be decoded."""


def read_image(path):
    """Read an RGB raster file into a (H, W, 3) float64 array in [0, 1]."""
    path = os.fspath(path)
    ext = _checked_extension(path, RGB_EXTENSIONS)
    if ext == ".ppm":
        return _read_ppm(path)
    raw = _read_png(path)
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise UnsupportedFormatError(
            f"{path}: expected a 3-channel RGB image, got array shape {raw.shape}"
        )
    rgb = raw[:, :, ::-1]  # cv2 decodes to BGR
    return _scale_to_unit(rgb, path)


def write_image(image, path, bits=8):
    """Write an RGB image, clamping to [0, 1] and quantizing to `bits` depth.

    PNG accepts ``bits`` of 8 or 16; PPM is always 8-bit (P6, maxval 255).
    """
    image = check_rgb_image(image)
    path = os.fspath(path)
    ext = _checked_extension(path, RGB_EXTENSIONS)
    if ext == ".ppm":
        if bits != 8:
            raise UnsupportedFormatError("PPM output is 8-bit only")
        _write_pnm(path, b"P6", _quantize(image, 8))
        return
    if bits not in (8, 16):
        raise UnsupportedFormatError(f"PNG bit depth must be 8 or 16, got {bits}")
    bgr = _quantize(image, bits)[:, :, ::-1]
    _write_png(path, bgr)


def read_gray(path):
    """Read a single-channel raster file into a (H, W) float64 array in [0, 1]."""
    path = os.fspath(path)
    ext = _checked_extension(path, GRAY_EXTENSIONS)
    if ext == ".pgm":
        return _read_pgm(path)
    raw = _read_png(path)
    if raw.ndim != 2:
        raise UnsupportedFormatError(
            f"{path}: expected a single-channel image, got array shape {raw.shape}"
        )
    return _scale_to_unit(raw, path)


def write_gray(values, path, bits=16):
    """Write a gray map; PNG defaults to 16-bit, PGM is 8-bit (P5, maxval 255)."""
    values = check_gray_map(values)
    path = os.fspath(path)
    ext = _checked_extension(path, GRAY_EXTENSIONS)
    if ext == ".pgm":
        _write_pnm(path, b"P5", _quantize(values, 8))
        return
    if bits not in (8, 16):
        raise UnsupportedFormatError(f"PNG bit depth must be 8 or 16, got {bits}")
    _write_png(path, _quantize(values, bits))


def _checked_extension(path, allowed):
    ext = os.path.splitext(path)[1].lower()
    if ext not in allowed:
        raise UnsupportedFormatError(
            f"{path}: unsupported format {ext or '(none)'}; expected one of {sorted(allowed)}"
        )
    return ext


def _scale_to_unit(raw, path):
    if raw.dtype == np.uint8:
        return raw.astype(np.float64) / 255.0
    if raw.dtype == np.uint16:
        return raw.astype(np.float64) / 65535.0
    raise UnsupportedFormatError(f"{path}: unsupported sample type {raw.dtype}")


def _quantize(values, bits):
    peak = 255 if bits == 8 else 65535
    dtype = np.uint8 if bits == 8 else np.uint16
    return np.rint(np.clip(values, 0.0, 1.0) * peak).astype(dtype)


def _read_png(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise CorruptFileError(f"{path}: file could not be decoded as PNG")
    return raw


def _write_png(path, data):
    try:
        ok = cv2.imwrite(path, data)
    except cv2.error as exc:
        raise OSError(f"{path}: {exc}") from exc
    if not ok:
        raise OSError(f"{path}: destination is not writable")


def _read_ppm(path):
    samples, (height, width) = _read_pnm(path, b"P6", channels=3)
    return samples.reshape(height, width, 3)


def _read_pgm(path):
    samples, (height, width) = _read_pnm(path, b"P5", channels=1)
    return samples.reshape(height, width)


def _read_pnm(path, magic, channels):
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "rb") as handle:
        data = handle.read()
    if not data.startswith(magic):
        found = data[:2].decode("ascii", "replace")
        raise UnsupportedFormatError(
            f"{path}: expected {magic.decode()} header, found {found!r}"
        )
    try:
        tokens, offset = _pnm_header_tokens(data, len(magic), count=3)
        width, height, maxval = (int(t) for t in tokens)
    except (ValueError, IndexError) as exc:
        raise CorruptFileError(f"{path}: malformed header") from exc
    if width < 1 or height < 1:
        raise CorruptFileError(f"{path}: invalid dimensions {width}x{height}")
    if maxval == 255:
        dtype, scale = np.uint8, 255.0
    elif maxval == 65535:
        dtype, scale = ">u2", 65535.0
    else:
        raise UnsupportedFormatError(f"{path}: unsupported maxval {maxval}")
    count = width * height * channels
    body = data[offset:]
    expected = count * np.dtype(dtype).itemsize
    if len(body) < expected:
        raise CorruptFileError(
            f"{path}: truncated pixel data ({len(body)} of {expected} bytes)"
        )
    samples = np.frombuffer(body[:expected], dtype=dtype).astype(np.float64)
    return samples / scale, (height, width)


def _pnm_header_tokens(data, offset, count):
    """Collect `count` whitespace-separated header tokens, skipping # comments."""
    tokens = []
    i = offset
    while len(tokens) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise ValueError("unexpected end of header")
        tokens.append(data[start:i])
    return tokens, i + 1  # single whitespace byte separates header from pixels


def _write_pnm(path, magic, data):
    height, width = data.shape[:2]
    header = magic + b"\n%d %d\n255\n" % (width, height)
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(data.tobytes())
