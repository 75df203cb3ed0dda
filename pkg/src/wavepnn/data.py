"""Datasets, label embedding, positive/negative batch construction, metrics.

Feature vectors are float64 with values in [0, 1]; labels are integer class
indices in ``[0, n_classes)``.
"""

import csv
import gzip
import struct
from dataclasses import dataclass, field

import numpy as np


class IdxFormatError(ValueError):
    """Raised when an IDX file has a bad magic number or inconsistent counts."""


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int


@dataclass
class Dataset:
    """A labelled feature matrix plus its class/dimension declaration.

    ``x`` is (N, dim) float64, ``labels`` is (N,) int64. All features must be
    finite and every label must lie in ``[0, n_classes)``.
    """

    x: np.ndarray
    labels: np.ndarray
    n_classes: int
    split: str = "train"
    dim: int = field(init=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.x.ndim != 2 or len(self.x) != len(self.labels):
            raise ValueError("x must be (N, dim) with one label per row")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("non-finite feature values")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels outside [0, {self.n_classes})")
        self.dim = self.x.shape[1]

    def __len__(self):
        return len(self.x)

    def __getitem__(self, i) -> Sample:
        return Sample(self.x[i], int(self.labels[i]))

    def subset(self, idx, split=None) -> "Dataset":
        return Dataset(self.x[idx], self.labels[idx], self.n_classes,
                       split if split is not None else self.split)


@dataclass(frozen=True)
class LabelEmbedSpec:
    """How a class label is written into an input vector.

    ``overwrite`` zeroes ``n_classes`` slots starting at ``slot_offset`` and
    sets the label's slot to ``slot_value``; ``append`` concatenates a one-hot
    block instead.
    """

    n_classes: int
    slot_offset: int = 0
    slot_value: float = 1.0
    mode: str = "overwrite"

    def __post_init__(self):
        if self.mode not in ("overwrite", "append"):
            raise ValueError(f"unknown embed mode {self.mode!r}")
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        if self.slot_offset < 0:
            raise ValueError("slot_offset must be >= 0")

    def embedded_dim(self, dim: int) -> int:
        if self.mode == "append":
            return dim + self.n_classes
        if self.slot_offset + self.n_classes > dim:
            raise ValueError(
                f"overwrite embedding needs slot_offset + n_classes <= dim "
                f"({self.slot_offset} + {self.n_classes} > {dim})")
        return dim


@dataclass(frozen=True)
class PosNegBatch:
    """Paired positive (true-label) and negative (wrong-label) inputs."""

    x_pos: np.ndarray
    x_neg: np.ndarray
    labels: np.ndarray


def embed_label(x, label, spec: LabelEmbedSpec):
    """Embed a single label into a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    out = embed_labels(x[None, :], np.array([label]), spec)
    return out[0]


def embed_labels(x, labels, spec: LabelEmbedSpec):
    """Vectorised label embedding over a (B, dim) batch."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= spec.n_classes:
        raise IndexError(f"label outside [0, {spec.n_classes})")
    rows = np.arange(len(x))
    if spec.mode == "overwrite":
        spec.embedded_dim(x.shape[1])
        out = x.copy()
        out[:, spec.slot_offset:spec.slot_offset + spec.n_classes] = 0.0
        out[rows, spec.slot_offset + labels] = spec.slot_value
        return out
    onehot = np.zeros((len(x), spec.n_classes))
    onehot[rows, labels] = spec.slot_value
    return np.hstack([x, onehot])


def make_pos_neg_batch(batch, spec: LabelEmbedSpec, rng) -> PosNegBatch:
    """Build positive/negative inputs from labelled samples.

    ``batch`` is a Dataset or a sequence of Sample. Negative labels are drawn
    uniformly from the wrong classes via ``rng`` and are resampled on every
    call.
    """
    if isinstance(batch, Dataset):
        x, labels = batch.x, batch.labels
    else:
        if len(batch) == 0:
            raise ValueError("empty batch")
        x = np.stack([s.features for s in batch])
        labels = np.array([s.label for s in batch])
    if len(x) == 0:
        raise ValueError("empty batch")
    if spec.n_classes < 2:
        raise ValueError("need n_classes >= 2 to draw negative labels")
    offsets = rng.integers(1, spec.n_classes, size=len(labels))
    neg_labels = (labels + offsets) % spec.n_classes
    return PosNegBatch(
        x_pos=embed_labels(x, labels, spec),
        x_neg=embed_labels(x, neg_labels, spec),
        labels=np.asarray(labels, dtype=np.int64),
    )


def confusion_matrix(preds, labels, n_classes):
    """Count matrix with true classes as rows and predictions as columns."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(preds) != len(labels):
        raise ValueError("preds and labels must have equal length")
    if len(preds) == 0:
        raise ValueError("empty input")
    if preds.min() < 0 or preds.max() >= n_classes or labels.min() < 0 \
            or labels.max() >= n_classes:
        raise ValueError(f"entries outside [0, {n_classes})")
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (labels, preds), 1)
    return m


def accuracy(preds, labels):
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if len(preds) == 0:
        raise ValueError("empty input")
    return float(np.mean(preds == labels))


def _read_idx(path):
    opener = open
    with open(path, "rb") as f:
        if f.read(2) == b"\x1f\x8b":
            opener = gzip.open
    with opener(path, "rb") as f:
        magic = struct.unpack(">I", f.read(4))[0]
        if magic == 0x00000803:
            n, rows, cols = struct.unpack(">III", f.read(12))
            data = np.frombuffer(f.read(n * rows * cols), dtype=np.uint8)
            if data.size != n * rows * cols:
                raise IdxFormatError(f"truncated IDX image payload in {path}")
            return data.reshape(n, rows, cols)
        if magic == 0x00000801:
            n = struct.unpack(">I", f.read(4))[0]
            data = np.frombuffer(f.read(n), dtype=np.uint8)
            if data.size != n:
                raise IdxFormatError(f"truncated IDX label payload in {path}")
            return data
        raise IdxFormatError(f"bad IDX magic 0x{magic:08x} in {path}")


def load_mnist_idx(images_path, labels_path, crop: int = 1) -> Dataset:
    """Load an MNIST-style IDX image/label pair (plain or gzipped).

    Pixels are scaled to [0, 1]; images are centre-cropped by ``crop`` pixels
    per side and flattened row-major.
    """
    images = _read_idx(images_path)
    labels = _read_idx(labels_path)
    if images.ndim != 3:
        raise IdxFormatError(f"{images_path} is not an IDX image file")
    if labels.ndim != 1:
        raise IdxFormatError(f"{labels_path} is not an IDX label file")
    if len(images) != len(labels):
        raise IdxFormatError(
            f"image/label count mismatch: {len(images)} vs {len(labels)}")
    if crop < 0 or images.shape[1] - 2 * crop <= 0 or images.shape[2] - 2 * crop <= 0:
        raise ValueError(f"invalid crop {crop} for {images.shape[1:]} images")
    if crop:
        images = images[:, crop:-crop, crop:-crop]
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64), n_classes=10)


def gen_vowel_dataset(n_classes=6, dim=40, n_train=2000, n_test=500,
                      noise_sigma=0.3, seed=0):
    """Synthetic spectral-template classification task.

    One fixed uniform template per class; each sample is the template plus
    Gaussian noise, multiplied by a random amplitude in [0.5, 1.0] and clipped
    to [0, 1]. Deterministic given ``seed``; train and test are drawn from
    disjoint stretches of the same stream.
    """
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    if dim < n_classes:
        raise ValueError(f"dim {dim} must be >= n_classes {n_classes}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    rng = np.random.default_rng(seed)
    templates = rng.random((n_classes, dim))

    def draw(n, split):
        labels = np.arange(n) % n_classes
        noise = rng.normal(0.0, noise_sigma, size=(n, dim)) if noise_sigma > 0 \
            else np.zeros((n, dim))
        amp = rng.uniform(0.5, 1.0, size=(n, 1))
        x = np.clip(amp * (templates[labels] + noise), 0.0, 1.0)
        return Dataset(x, labels, n_classes, split)

    return draw(n_train, "train"), draw(n_test, "test")


def save_dataset_csv(ds: Dataset, path):
    """Write ``dim,n_classes`` header row then one ``features...,label`` row per sample."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([ds.dim, ds.n_classes])
        for i in range(len(ds)):
            w.writerow([repr(float(v)) for v in ds.x[i]] + [int(ds.labels[i])])


def load_dataset_csv(path, split="train") -> Dataset:
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        dim, n_classes = int(header[0]), int(header[1])
        x, labels = [], []
        for row in r:
            if len(row) != dim + 1:
                raise ValueError(f"row has {len(row)} fields, expected {dim + 1}")
            x.append([float(v) for v in row[:dim]])
            labels.append(int(row[dim]))
    return Dataset(np.array(x, dtype=np.float64).reshape(len(labels), dim),
                   np.array(labels), n_classes, split)
