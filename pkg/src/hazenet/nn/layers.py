"""Minimal batched layers with hand-rolled gradients.

Activations use the channels-last (batch, height, width, channels) layout.
Convolutions are stride-1 cross-correlations with "same" zero padding,
lowered to a window-matrix matmul; the input-gradient pass is the
transposed operation, a same-padded correlation of the output gradient
with the spatially flipped kernel.  All arithmetic is float64.

Layers keep reusable scratch buffers sized to the largest batch seen, so
repeated calls do not touch fresh memory pages; a layer instance is
therefore not safe for concurrent calls (clone or reload per worker).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class _Scratch:
    """Reusable named buffers; leading axis may shrink without reallocating."""

    def __init__(self):
        self._bufs = {}

    def get(self, key, shape, dtype=np.float64):
        buf = self._bufs.get(key)
        if buf is not None and buf.shape[1:] == shape[1:] and buf.shape[0] >= shape[0]:
            return buf[: shape[0]]
        buf = np.empty(shape, dtype=dtype)
        self._bufs[key] = buf
        return buf


class Conv2d:
    """Same-padded stride-1 convolution on (n, h, w, c) inputs."""

    kind = "conv"

    def __init__(self, name, in_channels, out_channels, kernel_size, rng=None):
        if kernel_size % 2 != 1:
            raise ValueError("kernel size must be odd for same padding")
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.padding = (kernel_size - 1) // 2
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        if rng is None:
            self.weight = np.zeros(shape)
        else:
            fan_in = in_channels * kernel_size * kernel_size
            fan_out = out_channels * kernel_size * kernel_size
            self.weight = glorot_uniform(rng, shape, fan_in, fan_out)
        self.bias = np.zeros(out_channels)
        self.grad_weight = None
        self.grad_bias = None
        self._scratch = _Scratch()
        self._cols = None
        self._shape = None

    def _window_matrix(self, x, key):
        """Gather k*k*c window rows; (n, h, w, c) -> (n*h*w, k*k*c)."""
        n, h, w, c = x.shape
        k, p = self.kernel_size, self.padding
        if k == 1:
            return x.reshape(n * h * w, c)
        padded = self._scratch.get(key + "_pad", (n, h + 2 * p, w + 2 * p, c))
        padded.fill(0.0)
        padded[:, p : p + h, p : p + w, :] = x
        flat = padded.reshape(n, h + 2 * p, (w + 2 * p) * c)
        # horizontal windows are contiguous runs of k*c samples, stepping by c
        runs = sliding_window_view(flat, k * c, axis=2)[:, :, ::c]
        cols = self._scratch.get(key, (n, h, w, k, k * c))
        for u in range(k):
            cols[:, :, :, u, :] = runs[:, u : u + h, :w]
        return cols.reshape(n * h * w, k * k * c)

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ValueError(
                f"{self.name}: expected (n, h, w, {self.in_channels}) input, got {x.shape}"
            )
        n, h, w, _ = x.shape
        k, c, o = self.kernel_size, self.in_channels, self.out_channels
        cols = self._window_matrix(x, "cols")
        self._cols = cols
        self._shape = (n, h, w)
        # rows are (u, v, c)-ordered, matching weight[o, c, u, v]
        w2 = self.weight.transpose(2, 3, 1, 0).reshape(k * k * c, o)
        out = self._scratch.get("out", (n * h * w, o))
        np.matmul(cols, w2, out=out)
        out += self.bias
        return out.reshape(n, h, w, o)

    def backward(self, grad_out, need_input_grad=True):
        n, h, w = self._shape
        k, c, o = self.kernel_size, self.in_channels, self.out_channels
        g = self._scratch.get("gout", (n, h, w, o))
        np.copyto(g, grad_out)
        g2d = g.reshape(n * h * w, o)
        self.grad_bias = g2d.sum(axis=0)
        dw2 = self._cols.T @ g2d  # ((u, v, c), o)
        self.grad_weight = np.ascontiguousarray(
            dw2.reshape(k, k, c, o).transpose(3, 2, 0, 1)
        )
        if not need_input_grad:
            return None
        gcols = self._window_matrix(g, "gcols")
        # correlate with the 180-degree flipped kernel, swapping in/out channels
        wback = self.weight[:, :, ::-1, ::-1].transpose(2, 3, 0, 1).reshape(k * k * o, c)
        grad_in = self._scratch.get("gin", (n * h * w, c))
        np.matmul(gcols, wback, out=grad_in)
        return grad_in.reshape(n, h, w, c)

    def descriptor(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_size": self.kernel_size,
        }


class Dense:
    """Affine layer on flat (n, features) inputs."""

    kind = "dense"

    def __init__(self, name, in_features, out_features, rng=None):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        if rng is None:
            self.weight = np.zeros((out_features, in_features))
        else:
            self.weight = glorot_uniform(
                rng, (out_features, in_features), in_features, out_features
            )
        self.bias = np.zeros(out_features)
        self.grad_weight = None
        self.grad_bias = None
        self._scratch = _Scratch()
        self._input = None

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(
                f"{self.name}: expected (n, {self.in_features}) input, got {x.shape}"
            )
        self._input = x
        out = self._scratch.get("out", (x.shape[0], self.out_features))
        np.matmul(x, self.weight.T, out=out)
        out += self.bias
        return out

    def backward(self, grad_out, need_input_grad=True):
        self.grad_weight = grad_out.T @ self._input
        self.grad_bias = grad_out.sum(axis=0)
        if not need_input_grad:
            return None
        grad_in = self._scratch.get("gin", (grad_out.shape[0], self.in_features))
        np.matmul(grad_out, self.weight, out=grad_in)
        return grad_in

    def descriptor(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "in_features": self.in_features,
            "out_features": self.out_features,
        }


class ReLU:
    """Elementwise max(0, x); keeps the activation mask for the backward pass."""

    def __init__(self):
        self._scratch = _Scratch()
        self._mask = None

    def forward(self, x):
        mask = self._scratch.get("mask", x.shape, dtype=bool)
        np.greater(x, 0.0, out=mask)
        self._mask = mask
        out = self._scratch.get("out", x.shape)
        np.multiply(x, mask, out=out)
        return out

    def backward(self, grad_out):
        out = self._scratch.get("gin", grad_out.shape)
        np.multiply(grad_out, self._mask, out=out)
        return out
