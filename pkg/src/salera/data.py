"""Dataset ingestion and synthetic objectives.

Covers the IDX image/label container (plain or gzip), per-coordinate
standardization with train-split statistics, deterministic mini-batch
scheduling, and the synthetic problems used by tests and smoke runs:
Gaussian blob classification and the 1-D parabola.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np
from sklearn.datasets import make_blobs

_IMAGE_MAGIC = 0x00000803
_LABEL_MAGIC = 0x00000801
_STD_CLAMP = 1e-8


class IdxFormatError(ValueError):
    """Raised when an IDX file is malformed; the message names the bad field."""


@dataclass
class Dataset:
    """A design matrix with integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ValueError(f"inputs must be 2-D, got shape {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError(
                f"label count {self.labels.shape} does not match {self.inputs.shape[0]} rows"
            )

    @property
    def n(self):
        return self.inputs.shape[0]

    @property
    def n_features(self):
        return self.inputs.shape[1]


@dataclass(frozen=True)
class NormalizationStats:
    """Per-coordinate train-split mean/std; constant coordinates are flagged."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, count, field, path):
    data = fh.read(count)
    if len(data) != count:
        raise IdxFormatError(f"{path}: truncated {field} ({len(data)} of {count} bytes)")
    return data


def load_idx(images_path, labels_path):
    """Load an IDX image/label pair into a Dataset.

    Headers are big-endian; pixels come out as floats in [0, 1] (byte value
    over 255). Gzip-compressed files are inflated transparently.
    """
    with _open_maybe_gzip(images_path) as fh:
        magic, n_images, rows, cols = struct.unpack(
            ">IIII", _read_exact(fh, 16, "image header", images_path)
        )
        if magic != _IMAGE_MAGIC:
            raise IdxFormatError(f"{images_path}: image magic 0x{magic:08x} != 0x{_IMAGE_MAGIC:08x}")
        pixels = _read_exact(fh, n_images * rows * cols, "pixel data", images_path)
    with _open_maybe_gzip(labels_path) as fh:
        magic, n_labels = struct.unpack(">II", _read_exact(fh, 8, "label header", labels_path))
        if magic != _LABEL_MAGIC:
            raise IdxFormatError(f"{labels_path}: label magic 0x{magic:08x} != 0x{_LABEL_MAGIC:08x}")
        raw_labels = _read_exact(fh, n_labels, "label data", labels_path)
    if n_images != n_labels:
        raise IdxFormatError(
            f"count mismatch: {n_images} images in {images_path} vs {n_labels} labels in {labels_path}"
        )
    inputs = np.frombuffer(pixels, dtype=np.uint8).astype(np.float64) / 255.0
    inputs = inputs.reshape(n_images, rows * cols)
    labels = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    return Dataset(inputs=inputs, labels=labels, name="idx")


def serialize_idx(dataset, rows, cols):
    """Inverse of load_idx for a [0,1]-scaled dataset: (image_bytes, label_bytes).

    Useful for round-trip checks; byte values are recovered as pixel*255
    rounded to nearest.
    """
    n = dataset.n
    if rows * cols != dataset.n_features:
        raise ValueError(f"{rows}x{cols} grid does not hold {dataset.n_features} features")
    pixel_bytes = np.rint(dataset.inputs * 255.0).astype(np.uint8).tobytes()
    images = struct.pack(">IIII", _IMAGE_MAGIC, n, rows, cols) + pixel_bytes
    labels = struct.pack(">II", _LABEL_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes()
    return images, labels


def standardize(train, test):
    """Center/scale both splits with the training split's per-coordinate stats.

    x' = (x - mean_j) / max(std_j, 1e-8); coordinates whose train std falls
    below the clamp are constant and map to exactly 0 in both splits.
    """
    if train.n_features != test.n_features:
        raise ValueError(
            f"feature widths differ: {train.n_features} train vs {test.n_features} test"
        )
    mean = train.inputs.mean(axis=0)
    std = train.inputs.std(axis=0)
    constant = std < _STD_CLAMP
    safe_std = np.where(constant, 1.0, std)

    def transform(ds, suffix):
        z = (ds.inputs - mean) / safe_std
        z[:, constant] = 0.0
        return Dataset(inputs=z, labels=ds.labels.copy(), name=ds.name + suffix)

    stats = NormalizationStats(mean=mean, std=std, constant=constant)
    return transform(train, "/std"), transform(test, "/std"), stats


def minibatch_schedule(n, rho, epochs, rng):
    """Yield index arrays: fresh uniform shuffle per epoch, split into batches.

    Batch size is round(rho*n); the last batch of an epoch may be short but
    is kept, so every index appears exactly once per epoch. Deterministic
    for a given generator state.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    batch = int(round(rho * n))
    if batch < 1:
        raise ValueError(f"rho*n = {rho * n} gives an empty batch")
    per_epoch = -(-n // batch)
    for _ in range(epochs):
        perm = rng.permutation(n)
        for b in range(per_epoch):
            yield perm[b * batch : (b + 1) * batch]


def batches_per_epoch(n, rho):
    batch = int(round(rho * n))
    if batch < 1:
        raise ValueError(f"rho*n = {rho * n} gives an empty batch")
    return -(-n // batch)


@dataclass(frozen=True)
class Parabola:
    """Deterministic 1-D objective F(theta) = a/2 * theta^2.

    Exposes the two rates that bracket its gradient-descent behavior: the
    one-step-optimal eta_star = 1/a and the stability edge eta_minus = 2/a
    (steps with eta < eta_minus contract |theta|, eta = eta_minus reflects
    it, larger rates diverge).
    """

    a: float
    theta0: float

    def __post_init__(self):
        if not self.a > 0.0:
            raise ValueError(f"curvature must be > 0, got {self.a}")

    @property
    def eta_star(self):
        return 1.0 / self.a

    @property
    def eta_minus(self):
        return 2.0 / self.a

    def initial_theta(self):
        return np.array([self.theta0], dtype=np.float64)

    def loss(self, theta):
        return 0.5 * self.a * float(theta[0]) ** 2

    def grad(self, theta):
        return self.a * np.asarray(theta, dtype=np.float64)


def make_parabola(a, theta0):
    return Parabola(a=float(a), theta0=float(theta0))


def make_blob_dataset(n, n_features, n_classes, seed, cluster_std=2.0):
    """Synthetic Gaussian-cluster classification data, standardized per coordinate.

    Deterministic in the seed; labels are 0..n_classes-1.
    """
    inputs, labels = make_blobs(
        n_samples=n,
        n_features=n_features,
        centers=n_classes,
        cluster_std=cluster_std,
        random_state=int(seed) % (2**32),
    )
    inputs = np.asarray(inputs, dtype=np.float64)
    mean = inputs.mean(axis=0)
    std = inputs.std(axis=0)
    inputs = (inputs - mean) / np.where(std < _STD_CLAMP, 1.0, std)
    return Dataset(inputs=inputs, labels=labels.astype(np.int64), name=f"blobs{n}x{n_features}")


def make_blob_split(n_train, n_test, n_features, n_classes, seed, cluster_std=2.0):
    """Train/test pair drawn from one set of cluster centers.

    A single shuffled draw of n_train + n_test points is split head/tail, so
    both parts share the same class-conditional distributions; normalization
    statistics come from the training part only.
    """
    inputs, labels = make_blobs(
        n_samples=n_train + n_test,
        n_features=n_features,
        centers=n_classes,
        cluster_std=cluster_std,
        random_state=int(seed) % (2**32),
    )
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = labels.astype(np.int64)
    train = Dataset(inputs=inputs[:n_train], labels=labels[:n_train], name=f"blobs{n_train}train")
    test = Dataset(inputs=inputs[n_train:], labels=labels[n_train:], name=f"blobs{n_test}test")
    train, test, _ = standardize(train, test)
    return train, test
