"""Model file format.

A model file is self-describing:

* line 1 (ASCII): ``hazenet model format=1 arch=<revision>``
* line 2: a JSON object with ``format_version``, ``arch``, the optimizer
  hyperparameters, and the ordered layer descriptor list
* raw payload: for each layer in order, the weight then bias arrays as
  64-bit little-endian floats (C order); then, for each parameter in the
  same order, its two Adadelta accumulators (squared-gradient average,
  squared-update average)

Loading rebuilds the network, verifies the descriptor list against the
fixed architecture (naming the first offending layer), and requires the
payload length to match exactly, so truncated files are detected.
"""

import json
import os

import numpy as np

from .network import ARCH_REVISION, Adadelta, JointNet

FORMAT_VERSION = 1
_MAGIC = "hazenet model"


class ModelFileError(Exception):
    """The file is not a readable model container (corrupt or truncated)."""


class ArchitectureMismatchError(ModelFileError):
    """The stored layer list does not match the fixed architecture."""


def save_model(path, net, optimizer):
    """Write network parameters and optimizer state to ``path``."""
    header = {
        "format_version": FORMAT_VERSION,
        "arch": ARCH_REVISION,
        "optimizer": {"rho": optimizer.rho, "eps": optimizer.eps},
        "layers": net.descriptors(),
    }
    chunks = [
        f"{_MAGIC} format={FORMAT_VERSION} arch={ARCH_REVISION}\n".encode("ascii"),
        json.dumps(header, sort_keys=True).encode("ascii") + b"\n",
    ]
    for layer, attr in net.parameters():
        chunks.append(getattr(layer, attr).astype("<f8").tobytes())
    for g2, dx2 in zip(optimizer.avg_sq_grad, optimizer.avg_sq_delta):
        chunks.append(g2.astype("<f8").tobytes())
        chunks.append(dx2.astype("<f8").tobytes())
    with open(path, "wb") as handle:
        handle.write(b"".join(chunks))


def load_model(path):
    """Read a model file; returns ``(net, optimizer)``."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "rb") as handle:
        data = handle.read()
    first_break = data.find(b"\n")
    if first_break < 0 or not data[:first_break].decode("ascii", "replace").startswith(_MAGIC):
        raise ModelFileError(f"{path}: not a hazenet model file")
    second_break = data.find(b"\n", first_break + 1)
    if second_break < 0:
        raise ModelFileError(f"{path}: truncated header")
    try:
        header = json.loads(data[first_break + 1 : second_break])
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: corrupt header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ModelFileError(
            f"{path}: unsupported format version {header.get('format_version')}"
        )

    net = JointNet()
    _check_layers(path, header.get("layers"), net.descriptors())
    opt_params = header.get("optimizer", {})
    optimizer = Adadelta(net, rho=opt_params.get("rho", 0.95), eps=opt_params.get("eps", 1e-6))

    payload = data[second_break + 1 :]
    arrays = [getattr(layer, attr) for layer, attr in net.parameters()]
    for g2, dx2 in zip(optimizer.avg_sq_grad, optimizer.avg_sq_delta):
        arrays.extend([g2, dx2])
    expected = sum(a.size for a in arrays) * 8
    if len(payload) != expected:
        raise ModelFileError(
            f"{path}: payload has {len(payload)} bytes, expected {expected} (truncated or corrupt)"
        )
    offset = 0
    for target in arrays:
        values = np.frombuffer(payload, dtype="<f8", count=target.size, offset=offset)
        target[...] = values.reshape(target.shape)
        offset += target.size * 8
    return net, optimizer


def _check_layers(path, stored, expected):
    if not isinstance(stored, list):
        raise ModelFileError(f"{path}: corrupt header (missing layer list)")
    if len(stored) != len(expected):
        raise ArchitectureMismatchError(
            f"{path}: file describes {len(stored)} layers, architecture has {len(expected)}"
        )
    for index, (got, want) in enumerate(zip(stored, expected)):
        if got != want:
            raise ArchitectureMismatchError(
                f"{path}: layer {index} ({want['name']}) mismatch: file has {got}, expected {want}"
            )
