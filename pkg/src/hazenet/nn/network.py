"""The fixed joint estimator network, its loss, optimizer, and training loop.

The network maps a 15x15 RGB patch to a 4-vector: one transmittance value
followed by the three airlight channels.  Features are computed along
three convolutional paths over the full 15x15 extent (all convolutions
are same-padded, so spatial size never changes):

* bottom path: 1x1 -> 8, 5x5 -> 8, then four 3x3 -> 8 layers
* middle path: 1x1 -> 8, 7x7 -> 8, 5x5 -> 16
* first fusion: concat(bottom 8, middle 16) -> 3x3 -> 8
* top path: 1x1 -> 8, 7x7 -> 8, 5x5 -> 16, 3x3 -> 8
* head: concat(top 8, fusion 8) -> flatten 3600 -> dense 40 -> dense 4

Every layer is followed by a ReLU except the final 4-unit layer, which is
linear; predictions are clamped into their valid ranges only at inference
time.  Training minimizes the mean squared error of the 4-vector with
Adadelta, shuffling each epoch with a seeded generator; batches are
processed in fixed-size micro-chunks (summed in a fixed order), so runs
are bitwise reproducible.
"""

import numpy as np

from ..haze import MIN_AIRLIGHT
from .layers import Conv2d, Dense, ReLU, _Scratch

PATCH_SIZE = 15
OUTPUT_SIZE = 4
ARCH_REVISION = "joint-ta-v1"

# Batches are processed this many samples at a time to keep conv scratch
# buffers cache-resident; purely an execution detail, gradients are summed
# over the whole batch either way.
MICROBATCH = 32

# (name, kind, spec): conv spec is (in_ch, out_ch, kernel), dense is (in, out).
LAYER_SPECS = [
    ("bottom_in", "conv", (3, 8, 1)),
    ("bottom_c5", "conv", (8, 8, 5)),
    ("bottom_c3a", "conv", (8, 8, 3)),
    ("bottom_c3b", "conv", (8, 8, 3)),
    ("bottom_c3c", "conv", (8, 8, 3)),
    ("bottom_c3d", "conv", (8, 8, 3)),
    ("middle_in", "conv", (3, 8, 1)),
    ("middle_c7", "conv", (8, 8, 7)),
    ("middle_c5", "conv", (8, 16, 5)),
    ("fuse1", "conv", (24, 8, 3)),
    ("top_in", "conv", (3, 8, 1)),
    ("top_c7", "conv", (8, 8, 7)),
    ("top_c5", "conv", (8, 16, 5)),
    ("top_c3", "conv", (16, 8, 3)),
    ("head_dense", "dense", (16 * PATCH_SIZE * PATCH_SIZE, 40)),
    ("head_out", "dense", (40, OUTPUT_SIZE)),
]


def _build_layers(rng):
    layers = {}
    for name, kind, spec in LAYER_SPECS:
        if kind == "conv":
            in_ch, out_ch, kernel = spec
            layers[name] = Conv2d(name, in_ch, out_ch, kernel, rng)
        else:
            in_f, out_f = spec
            layers[name] = Dense(name, in_f, out_f, rng)
    return layers


class JointNet:
    """The joint transmittance/illumination estimator graph.

    Holds reusable scratch buffers, so one instance must not run
    concurrent forward passes; load or build one instance per worker.
    """

    def __init__(self, seed=0):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
        self.layers = _build_layers(rng)
        # one rectifier per layer except the linear output
        self.relus = {name: ReLU() for name, _, _ in LAYER_SPECS[:-1]}
        self._scratch = _Scratch()

    def layer_list(self):
        return [self.layers[name] for name, _, _ in LAYER_SPECS]

    def parameters(self):
        """(layer, attribute) pairs in serialization order."""
        return [(layer, attr) for layer in self.layer_list() for attr in ("weight", "bias")]

    def param_count(self):
        return sum(getattr(layer, attr).size for layer, attr in self.parameters())

    def descriptors(self):
        return [layer.descriptor() for layer in self.layer_list()]

    def _act(self, name, x):
        return self.relus[name].forward(self.layers[name].forward(x))

    def _concat(self, key, first, second):
        n, h, w = first.shape[:3]
        c1, c2 = first.shape[3], second.shape[3]
        merged = self._scratch.get(key, (n, h, w, c1 + c2))
        merged[..., :c1] = first
        merged[..., c1:] = second
        return merged

    def forward(self, patches):
        """Run (n, 15, 15, 3) patches; returns raw (n, 4) outputs.

        The returned array aliases internal scratch and is overwritten by
        the next forward call; copy it if it must outlive that.
        """
        patches = np.asarray(patches, dtype=np.float64)
        if patches.ndim != 4 or patches.shape[1:] != (PATCH_SIZE, PATCH_SIZE, 3):
            raise ValueError(
                f"expected patches of shape (n, {PATCH_SIZE}, {PATCH_SIZE}, 3), got {patches.shape}"
            )
        x = patches
        b = self._act("bottom_in", x)
        b = self._act("bottom_c5", b)
        for name in ("bottom_c3a", "bottom_c3b", "bottom_c3c", "bottom_c3d"):
            b = self._act(name, b)
        m = self._act("middle_in", x)
        m = self._act("middle_c7", m)
        m = self._act("middle_c5", m)
        f = self._act("fuse1", self._concat("cat1", b, m))
        u = self._act("top_in", x)
        u = self._act("top_c7", u)
        u = self._act("top_c5", u)
        u = self._act("top_c3", u)
        merged = self._concat("cat2", u, f)
        flat = merged.reshape(merged.shape[0], -1)
        h = self._act("head_dense", flat)
        return self.layers["head_out"].forward(h)

    def backward(self, grad_out):
        """Backpropagate output gradients; leaves grads on each layer."""

        def back(name, grad, need_input_grad=True):
            grad = self.relus[name].backward(grad)
            return self.layers[name].backward(grad, need_input_grad)

        g = self.layers["head_out"].backward(grad_out)
        g = back("head_dense", g)
        n = g.shape[0]
        gz = g.reshape(n, PATCH_SIZE, PATCH_SIZE, 16)
        gu, gf = gz[..., :8], gz[..., 8:]

        gu = back("top_c3", gu)
        gu = back("top_c5", gu)
        gu = back("top_c7", gu)
        back("top_in", gu, need_input_grad=False)

        gcat = back("fuse1", gf)
        gb, gm = gcat[..., :8], gcat[..., 8:]

        for name in ("bottom_c3d", "bottom_c3c", "bottom_c3b", "bottom_c3a"):
            gb = back(name, gb)
        gb = back("bottom_c5", gb)
        back("bottom_in", gb, need_input_grad=False)

        gm = back("middle_c5", gm)
        gm = back("middle_c7", gm)
        back("middle_in", gm, need_input_grad=False)


def clamp_outputs(raw):
    """Map raw (n, 4) outputs into valid ranges: t in [0,1], airlight in (0,1]."""
    clamped = np.empty_like(raw)
    clamped[:, 0] = np.clip(raw[:, 0], 0.0, 1.0)
    clamped[:, 1:] = np.clip(raw[:, 1:], MIN_AIRLIGHT, 1.0)
    return clamped


def mse_loss(predicted, target):
    """Mean squared error over the output components."""
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {target.shape}")
    return float(np.mean((predicted - target) ** 2))


class Adadelta:
    """Adadelta with running averages of squared gradients and updates.

    E[g^2] <- rho E[g^2] + (1-rho) g^2
    delta   = - sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
    E[dx^2] <- rho E[dx^2] + (1-rho) delta^2
    """

    def __init__(self, net, rho=0.95, eps=1e-6):
        if not (0.0 <= rho < 1.0) or eps <= 0.0:
            raise ValueError("require 0 <= rho < 1 and eps > 0")
        self.rho = rho
        self.eps = eps
        self.avg_sq_grad = [np.zeros_like(getattr(layer, attr)) for layer, attr in net.parameters()]
        self.avg_sq_delta = [np.zeros_like(g) for g in self.avg_sq_grad]

    def step(self, net, grads=None):
        """Apply one update; `grads` defaults to the layer-attached gradients."""
        params = net.parameters()
        if grads is None:
            grads = [getattr(layer, "grad_" + attr) for layer, attr in params]
        for i, (layer, attr) in enumerate(params):
            grad = grads[i]
            g2, dx2 = self.avg_sq_grad[i], self.avg_sq_delta[i]
            g2 *= self.rho
            g2 += (1.0 - self.rho) * grad * grad
            delta = -np.sqrt(dx2 + self.eps) / np.sqrt(g2 + self.eps) * grad
            dx2 *= self.rho
            dx2 += (1.0 - self.rho) * delta * delta
            getattr(layer, attr)[...] += delta


def train(net, optimizer, pixels, labels, epochs=90, batch_size=1000, seed=0):
    """Minibatch training; returns the mean per-sample loss of each epoch.

    Each epoch shuffles with a generator derived from ``seed``; gradients
    are averaged over each batch and one optimizer step is taken per
    batch.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n = pixels.shape[0]
    if n == 0:
        raise ValueError("training set is empty")
    if labels.shape != (n, OUTPUT_SIZE):
        raise ValueError(f"labels must have shape ({n}, {OUTPUT_SIZE}), got {labels.shape}")
    if epochs < 0 or batch_size < 1:
        raise ValueError("epochs must be >= 0 and batch_size >= 1")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    params = net.parameters()
    summed = [np.zeros_like(getattr(layer, attr)) for layer, attr in params]
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            for acc in summed:
                acc.fill(0.0)
            for offset in range(0, len(batch), MICROBATCH):
                idx = batch[offset : offset + MICROBATCH]
                out = net.forward(pixels[idx])
                residual = out - labels[idx]
                loss_sum += float(np.sum(residual**2)) / OUTPUT_SIZE
                net.backward(2.0 * residual / OUTPUT_SIZE)
                for acc, (layer, attr) in zip(summed, params):
                    acc += getattr(layer, "grad_" + attr)
            inv = 1.0 / len(batch)
            for acc in summed:
                acc *= inv
            optimizer.step(net, grads=summed)
        history.append(loss_sum / n)
    return history
