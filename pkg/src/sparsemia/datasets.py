"""Dataset containers, synthetic generators, binary loaders, and augmentation."""

from __future__ import annotations

import os
import struct
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LabeledDataset",
    "CorruptHeaderError",
    "TruncatedPayloadError",
    "LabelRangeError",
    "make_synthetic",
    "normalize",
    "augment",
    "write_image_dataset",
    "load_image_dataset",
    "load_cifar10",
]


class CorruptHeaderError(ValueError):
    """The container header is malformed (magic, version, or shape fields)."""


class TruncatedPayloadError(ValueError):
    """The container payload ends before the header-declared size."""


class LabelRangeError(ValueError):
    """A label lies outside [0, class_count)."""


@dataclass
class LabeledDataset:
    """Inputs with integer class labels; normalization is applied at most once."""

    inputs: np.ndarray
    labels: np.ndarray
    class_count: int
    normalization: dict = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.inputs) != len(self.labels):
            raise ValueError(
                f"{len(self.inputs)} inputs vs {len(self.labels)} labels"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise LabelRangeError(f"labels must lie in [0, {self.class_count})")

    def __len__(self):
        return len(self.labels)

    @property
    def is_image(self):
        return self.inputs.ndim == 4

    def subset(self, indices):
        return LabeledDataset(
            self.inputs[indices], self.labels[indices],
            self.class_count, normalization=self.normalization,
        )


def make_synthetic(kind, n, classes, noise=0.0, seed=0, dim=2):
    """Synthetic benchmark data: gaussian ``blobs`` or interleaved ``spirals``.

    Blob centers sit on a circle in the first two coordinates; extra ``dim``
    coordinates carry pure noise, which makes individual samples memorizable
    while class overlap keeps generalization imperfect.  Blobs with zero
    noise collapse onto well-separated class centers, so a linear probe
    classifies them perfectly.  The same seed always produces the identical
    dataset.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, classes, size=n)
    if kind == "blobs":
        angles = 2 * np.pi * np.arange(classes) / classes
        centers = np.zeros((classes, dim))
        centers[:, 0] = 5.0 * np.cos(angles)
        centers[:, 1] = 5.0 * np.sin(angles)
        inputs = centers[labels] + noise * rng.standard_normal((n, dim))
    elif kind == "spirals":
        t = rng.random(n)
        theta = 2 * np.pi * labels / classes + 3.5 * np.pi * t
        radius = 0.2 + 0.8 * t
        inputs = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
        inputs += noise * rng.standard_normal((n, 2))
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return LabeledDataset(inputs, labels, classes)


def normalize(dataset):
    """Shift/scale to zero mean, unit variance per channel (or per feature).

    Raises if the dataset was already normalized; the metadata flag makes
    double normalization structurally impossible.
    """
    if dataset.normalization is not None and dataset.normalization.get("applied"):
        raise ValueError("dataset is already normalized")
    x = dataset.inputs
    axes = (0, 2, 3) if x.ndim == 4 else tuple(range(x.ndim - 1))
    mean = x.mean(axis=axes)
    std = x.std(axis=axes)
    std = np.where(std == 0, 1.0, std)
    if x.ndim == 4:
        out = (x - mean.reshape(1, -1, 1, 1)) / std.reshape(1, -1, 1, 1)
    else:
        out = (x - mean) / std
    return LabeledDataset(
        out, dataset.labels, dataset.class_count,
        normalization={"mean": mean, "std": std, "applied": True},
    )


def augment(batch, rng, pad=4):
    """Random horizontal flip plus random crop after zero padding.

    Expects image batches (N, C, H, W); anything else passes through with a
    warning.  Output shape always equals input shape.
    """
    if batch.ndim != 4:
        warnings.warn("augment: non-image batch passed through unchanged")
        return batch
    n, c, h, w = batch.shape
    flips = rng.random(n) < 0.5
    out = batch.copy()
    out[flips] = out[flips, :, :, ::-1]
    padded = np.pad(out, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    offsets = rng.integers(0, 2 * pad + 1, size=(n, 2))
    for i in range(n):
        dy, dx = offsets[i]
        out[i] = padded[i, :, dy:dy + h, dx:dx + w]
    return out


_MAGIC = b"IMGS"
_VERSION = 1


def write_image_dataset(dataset, path):
    """Write the binary tensor container.

    Layout (little-endian): magic ``IMGS``, u32 version, u32 n/c/h/w/classes,
    n x u32 labels, n*c*h*w f64 inputs.
    """
    if dataset.inputs.ndim != 4:
        raise ValueError("container stores image datasets (N, C, H, W)")
    n, c, h, w = dataset.inputs.shape
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<6I", _VERSION, n, c, h, w, dataset.class_count))
        f.write(dataset.labels.astype("<u4").tobytes())
        f.write(dataset.inputs.astype("<f8").tobytes())


def load_image_dataset(path):
    """Read the binary tensor container written by :func:`write_image_dataset`."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 28 or data[:4] != _MAGIC:
        raise CorruptHeaderError("bad magic or incomplete header")
    version, n, c, h, w, classes = struct.unpack_from("<6I", data, 4)
    if version != _VERSION:
        raise CorruptHeaderError(f"unsupported container version {version}")
    if classes < 1 or min(n, c, h, w) < 1:
        raise CorruptHeaderError("non-positive shape field")
    labels_end = 28 + 4 * n
    payload_end = labels_end + 8 * n * c * h * w
    if len(data) < payload_end:
        raise TruncatedPayloadError(
            f"payload ends at {len(data)} bytes, expected {payload_end}"
        )
    labels = np.frombuffer(data[28:labels_end], dtype="<u4").astype(np.int64)
    if labels.size and labels.max() >= classes:
        raise LabelRangeError(f"label {labels.max()} outside [0, {classes})")
    inputs = np.frombuffer(data[labels_end:payload_end], dtype="<f8").reshape(n, c, h, w)
    return LabeledDataset(inputs.copy(), labels, classes)


_CIFAR_RECORD = 3073  # 1 label byte + 3 * 32 * 32 pixels
_CIFAR_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)] + ["test_batch.bin"]


def load_cifar10(directory):
    """Load the standard CIFAR-10 binary batches into one dataset.

    Reads the six batch files, yielding 60000 images of shape (3, 32, 32)
    scaled to [0, 1].  Normalization is a separate, explicit step.
    """
    images, labels = [], []
    for name in _CIFAR_FILES:
        path = os.path.join(directory, name)
        with open(path, "rb") as f:
            raw = f.read()
        if len(raw) == 0 or len(raw) % _CIFAR_RECORD:
            raise TruncatedPayloadError(f"{name}: size {len(raw)} not a record multiple")
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, _CIFAR_RECORD)
        labels.append(records[:, 0].astype(np.int64))
        images.append(records[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0)
    labels = np.concatenate(labels)
    if labels.max() > 9:
        raise LabelRangeError("CIFAR-10 label outside [0, 10)")
    return LabeledDataset(np.concatenate(images), labels, 10)
