"""Minimal feedforward networks with manual backpropagation.

Dense layers with ReLU hidden activations and identity outputs, softmax
cross-entropy loss, and exact gradients assembled into a single flat float64
parameter vector. Parameters are owned by the caller (typically an
optimizer); the network itself only knows shapes and provides
forward/backward as functions of a flat vector. Each layer's weights and
bias occupy one fused, named segment of the flat vector.
"""

from __future__ import annotations

import struct

import numpy as np

from .vectors import Partition

_SNAPSHOT_MAGIC = b"SALR"
_SNAPSHOT_VERSION = 1


class DenseNet:
    """Fully connected classifier net defined by its layer widths.

    ``sizes = (in, h1, ..., out)`` gives len(sizes)-1 dense layers. Hidden
    layers apply ReLU; the final layer emits raw logits. Weight matrices are
    stored row-major as (fan_in, fan_out) blocks followed by the bias, so
    layer i occupies ``sizes[i]*sizes[i+1] + sizes[i+1]`` flat entries.
    """

    def __init__(self, sizes):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2:
            raise ValueError("need at least input and output widths")
        if any(s < 1 for s in sizes):
            raise ValueError(f"all widths must be >= 1, got {sizes}")
        self.sizes = sizes
        lengths = [
            (f"layer{i}", fan_in * fan_out + fan_out)
            for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]
        self.partition = Partition.from_lengths(lengths)
        self.n_params = self.partition.size

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    @property
    def n_classes(self):
        return self.sizes[-1]

    def init_params(self, rng):
        """Fresh flat parameter vector: uniform weights in the fan-balanced
        bound +-sqrt(6/(fan_in+fan_out)), biases zero."""
        theta = np.zeros(self.n_params, dtype=np.float64)
        for (weights, bias), (fan_in, fan_out) in zip(
            self._views(theta), zip(self.sizes[:-1], self.sizes[1:])
        ):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights[...] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            bias[...] = 0.0
        return theta

    def _views(self, theta):
        """(weights, bias) array views into a flat vector, one pair per layer."""
        views = []
        for seg, fan_in, fan_out in zip(self.partition, self.sizes[:-1], self.sizes[1:]):
            block = theta[seg.slice]
            views.append(
                (block[: fan_in * fan_out].reshape(fan_in, fan_out), block[fan_in * fan_out :])
            )
        return views

    def forward(self, theta, inputs):
        """Run a batch through the net.

        Returns (logits, cache); the cache holds per-layer activations and
        the weight views needed by backward.
        """
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != self.sizes[0]:
            raise ValueError(
                f"inputs of shape {inputs.shape} do not match input width {self.sizes[0]}"
            )
        theta = np.asarray(theta, dtype=np.float64)
        views = self._views(theta)
        activations = [inputs]
        out = inputs
        last = self.n_layers - 1
        for i, (weights, bias) in enumerate(views):
            out = out @ weights + bias
            if i != last:
                out = np.maximum(out, 0.0)
            activations.append(out)
        return out, _ForwardCache(views=views, activations=activations)

    def backward(self, cache, labels):
        """Exact gradient of the mean cross-entropy w.r.t. the flat vector.

        Requires the cache returned by the matching forward call.
        """
        labels = np.asarray(labels)
        logits = cache.activations[-1]
        n = logits.shape[0]
        if labels.shape != (n,):
            raise ValueError(f"labels shape {labels.shape} does not match batch {n}")
        probs = softmax(logits)
        delta = probs
        delta[np.arange(n), labels] -= 1.0
        delta /= n

        grad = np.zeros(self.n_params, dtype=np.float64)
        grad_views = self._views(grad)
        for i in range(self.n_layers - 1, -1, -1):
            below = cache.activations[i]
            g_w, g_b = grad_views[i]
            g_w[...] = below.T @ delta
            g_b[...] = delta.sum(axis=0)
            if i > 0:
                weights, _ = cache.views[i]
                delta = delta @ weights.T
                # ReLU gate: activations are zero exactly where the unit was off
                delta *= below > 0.0
        return grad

    def predict_logits(self, theta, inputs):
        logits, _ = self.forward(theta, inputs)
        return logits

    def save(self, theta, path):
        """Write a snapshot: magic, version, layer widths, float64 parameters."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ValueError(f"theta shape {theta.shape} != ({self.n_params},)")
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sII", _SNAPSHOT_MAGIC, _SNAPSHOT_VERSION, len(self.sizes)))
            fh.write(struct.pack(f"<{len(self.sizes)}I", *self.sizes))
            fh.write(theta.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        """Read a snapshot; returns (net, theta)."""
        with open(path, "rb") as fh:
            head = fh.read(12)
            if len(head) != 12:
                raise SnapshotFormatError("truncated header")
            magic, version, n_sizes = struct.unpack("<4sII", head)
            if magic != _SNAPSHOT_MAGIC:
                raise SnapshotFormatError(f"bad magic {magic!r}")
            if version != _SNAPSHOT_VERSION:
                raise SnapshotFormatError(f"unsupported version {version}")
            raw_sizes = fh.read(4 * n_sizes)
            if len(raw_sizes) != 4 * n_sizes:
                raise SnapshotFormatError("truncated layer widths")
            sizes = struct.unpack(f"<{n_sizes}I", raw_sizes)
            net = cls(sizes)
            payload = fh.read()
        theta = np.frombuffer(payload, dtype="<f8").astype(np.float64)
        if theta.shape != (net.n_params,):
            raise SnapshotFormatError(
                f"parameter block has {theta.size} values, expected {net.n_params}"
            )
        return net, theta


class _ForwardCache:
    """Activations and weight views retained from one forward pass."""

    __slots__ = ("views", "activations")

    def __init__(self, views, activations):
        self.views = views
        self.activations = activations


class SnapshotFormatError(ValueError):
    """Raised when a network snapshot file is malformed."""


def softmax(logits):
    """Row-wise softmax with max-subtraction for stability; rows sum to 1."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_error(logits, labels):
    """Mean cross-entropy and argmax error rate for a batch of logits.

    Ties in the argmax go to the lowest class index, so an all-zero logit
    row predicts class 0 deterministically.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[np.arange(n), labels]))
    predictions = np.argmax(logits, axis=1)
    error = float(np.mean(predictions != labels))
    return loss, error


def m0_net(n_features=784, n_classes=10):
    """Softmax regression: one dense layer, no hidden units."""
    return DenseNet((n_features, n_classes))


def m2_net(n_features=784, n_classes=10):
    """Two ReLU hidden layers of 500 and 300 units."""
    return DenseNet((n_features, 500, 300, n_classes))
