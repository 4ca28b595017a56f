"""Training data synthesis from clean image + depth map pairs.

For each scene one scattering coefficient and one airlight are drawn, the
depth map is normalized to [0, 1] over its valid pixels, a hazy image is
rendered with the scattering model, and overlapping patches are cut from
it.  Patches that are too smooth or that cover too many invalid-depth
pixels are dropped; survivors are labeled with the mean transmittance of
their footprint and the scene airlight.

The manifest format is a text file with one scene per line::

    <image path> <depth path> [<validity mask path>]

Paths are relative to the manifest file; ``#`` starts a comment.  The
patch container written by :func:`save_patches` is binary: an 8-byte
magic ``HZPATCH1``, a little-endian uint64 patch count and uint32 patch
size and uint8 has-labels flag (3 zero pad bytes), then per patch the
origin row and column as uint64, the ``size*size*3`` float64 pixel block
in row-major (row, column, channel) order, and, when labeled, 4 float64
label values (transmittance, then the three airlight channels).  All
values little-endian.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

from . import io as image_io
from .haze import synthesize_haze, transmittance_from_depth
from .patches import PatchSet, extract_patches, patch_variances
from .validation import check_gray_map, check_rgb_image, check_same_shape

PATCH_MAGIC = b"HZPATCH1"


class EmptyTrainingSetError(ValueError):
    """Every extracted patch was filtered out."""


@dataclass
class SceneItem:
    """A clean image with its depth map and depth-validity mask."""

    image: np.ndarray
    depth: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.image = check_rgb_image(self.image)
        self.depth = check_gray_map(self.depth, "depth")
        check_same_shape(self.image, self.depth, "image", "depth")
        if self.valid is None:
            self.valid = np.ones(self.depth.shape, dtype=bool)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            check_same_shape(self.depth, self.valid, "depth", "valid")
        if np.any(self.depth[self.valid] < 0):
            raise ValueError("depth must be >= 0 where valid")


@dataclass(frozen=True)
class SynthConfig:
    beta_range: tuple = (0.5, 1.0)
    airlight_range: tuple = ((0.7, 1.0), (0.7, 1.0), (0.7, 1.0))
    patch_size: int = 15
    stride: int = 5
    variance_threshold: float = 0.002
    max_missing_depth_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.beta_range
        if not (0 < lo <= hi):
            raise ValueError(f"invalid beta range {self.beta_range}")
        for channel in self.airlight_range:
            lo, hi = channel
            if not (0 < lo <= hi <= 1):
                raise ValueError(f"invalid airlight range {self.airlight_range}")
        if self.patch_size < 1 or self.stride < 1:
            raise ValueError("patch_size and stride must be >= 1")
        if self.variance_threshold < 0 or not 0 <= self.max_missing_depth_fraction <= 1:
            raise ValueError("invalid filter thresholds")


def sample_haze_params(config, rng):
    """Draw one (beta, airlight) pair: beta uniform, channels independent uniform."""
    beta = rng.uniform(*config.beta_range)
    airlight = np.array([rng.uniform(lo, hi) for lo, hi in config.airlight_range])
    return beta, airlight


def normalize_depth(depth, valid):
    """Scale depth so the largest valid value is 1 (zero map stays zero)."""
    top = depth[valid].max()
    if top <= 0:
        return np.zeros_like(depth)
    return depth / top


def label_patch(t_map, origin, size):
    """Mean transmittance over a patch footprint."""
    row, col = int(origin[0]), int(origin[1])
    height, width = t_map.shape
    if row < 0 or col < 0 or row + size > height or col + size > width:
        raise ValueError(f"footprint at {(row, col)} size {size} exceeds {t_map.shape}")
    return float(t_map[row : row + size, col : col + size].mean())


def build_training_set(items, config=None):
    """Synthesize, cut, filter, and label patches for a list of scenes.

    Deterministic for a fixed config seed: each scene draws from its own
    generator spawned from the master seed, so results do not depend on
    processing order or worker count.
    """
    if config is None:
        config = SynthConfig()
    items = list(items)
    if not items:
        raise ValueError("dataset is empty")
    seeds = np.random.SeedSequence(config.seed).spawn(len(items))
    pixel_blocks, origin_blocks, label_blocks = [], [], []
    extracted = smooth = holed = 0
    for index, (item, seed) in enumerate(zip(items, seeds)):
        if not item.valid.any():
            raise ValueError(f"scene {index} has no valid depth")
        rng = np.random.default_rng(seed)
        beta, airlight = sample_haze_params(config, rng)
        depth = normalize_depth(item.depth, item.valid)
        t_map = transmittance_from_depth(depth, beta)
        t_map[~item.valid] = t_map[item.valid].mean()
        hazy = synthesize_haze(item.image, t_map, airlight)

        cut = extract_patches(hazy, config.patch_size, config.stride)
        keep_texture = patch_variances(cut.pixels) > config.variance_threshold
        missing = _footprint_missing_fraction(~item.valid, cut.origins, config.patch_size)
        keep_depth = missing <= config.max_missing_depth_fraction
        extracted += len(cut)
        smooth += int(np.sum(~keep_texture))
        holed += int(np.sum(~keep_depth))
        kept = cut.subset(keep_texture & keep_depth)
        if len(kept) == 0:
            continue
        labels = np.empty((len(kept), 4))
        labels[:, 0] = [
            label_patch(t_map, origin, config.patch_size) for origin in kept.origins
        ]
        labels[:, 1:] = airlight
        pixel_blocks.append(kept.pixels)
        origin_blocks.append(kept.origins)
        label_blocks.append(labels)
    if not pixel_blocks:
        raise EmptyTrainingSetError(
            f"no patches survived filtering: {extracted} extracted, "
            f"{smooth} at or below variance threshold {config.variance_threshold}, "
            f"{holed} over missing-depth fraction {config.max_missing_depth_fraction}"
        )
    return PatchSet(
        np.concatenate(pixel_blocks),
        np.concatenate(origin_blocks),
        np.concatenate(label_blocks),
    )


def _footprint_missing_fraction(missing, origins, size):
    """Fraction of invalid-depth pixels under each patch footprint."""
    padded = np.cumsum(np.cumsum(missing.astype(np.float64), axis=0), axis=1)
    summed = np.zeros((missing.shape[0] + 1, missing.shape[1] + 1))
    summed[1:, 1:] = padded
    r = origins[:, 0]
    c = origins[:, 1]
    counts = (
        summed[r + size, c + size]
        - summed[r, c + size]
        - summed[r + size, c]
        + summed[r, c]
    )
    return counts / float(size * size)


def load_manifest(path):
    """Read a manifest file into a list of scenes."""
    base = os.path.dirname(os.path.abspath(path))
    items = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ValueError(
                    f"{path}:{line_no}: expected 'image depth [mask]', got {len(parts)} fields"
                )
            image = image_io.read_image(os.path.join(base, parts[0]))
            depth = image_io.read_gray(os.path.join(base, parts[1]))
            valid = None
            if len(parts) == 3:
                valid = image_io.read_gray(os.path.join(base, parts[2])) > 0.5
            items.append(SceneItem(image, depth, valid))
    if not items:
        raise ValueError(f"{path}: manifest lists no scenes")
    return items


def save_patches(path, patches):
    """Write a PatchSet to the binary patch container."""
    count = len(patches)
    size = patches.size
    has_labels = patches.labels is not None
    with open(path, "wb") as handle:
        handle.write(PATCH_MAGIC)
        handle.write(struct.pack("<QIB3x", count, size, int(has_labels)))
        for i in range(count):
            handle.write(struct.pack("<QQ", int(patches.origins[i, 0]), int(patches.origins[i, 1])))
            handle.write(patches.pixels[i].astype("<f8").tobytes())
            if has_labels:
                handle.write(patches.labels[i].astype("<f8").tobytes())


def load_patches(path):
    """Read a PatchSet from the binary patch container."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "rb") as handle:
        data = handle.read()
    if not data.startswith(PATCH_MAGIC):
        raise ValueError(f"{path}: not a patch container")
    header = struct.Struct("<QIB3x")
    count, size, has_labels = header.unpack_from(data, len(PATCH_MAGIC))
    record = 16 + size * size * 3 * 8 + (32 if has_labels else 0)
    expected = len(PATCH_MAGIC) + header.size + count * record
    if len(data) != expected:
        raise ValueError(f"{path}: truncated or corrupt ({len(data)} bytes, expected {expected})")
    pixels = np.empty((count, size, size, 3))
    origins = np.empty((count, 2), dtype=np.int64)
    labels = np.empty((count, 4)) if has_labels else None
    offset = len(PATCH_MAGIC) + header.size
    for i in range(count):
        origins[i] = struct.unpack_from("<QQ", data, offset)
        offset += 16
        pixels[i] = np.frombuffer(data, "<f8", size * size * 3, offset).reshape(size, size, 3)
        offset += size * size * 3 * 8
        if has_labels:
            labels[i] = np.frombuffer(data, "<f8", 4, offset)
            offset += 32
    return PatchSet(pixels, origins, labels)
