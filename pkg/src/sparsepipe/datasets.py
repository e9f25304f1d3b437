"""Data ingestion: IDX files, padding, PCA reduction, synthetic fixtures."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, replace

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

# MNIST conventions used throughout: pixels scaled to [0,1] by /255, row-major
# flattening, validation split = last VALIDATION_SIZE training samples.
PIXEL_SCALE = 255.0
VALIDATION_SIZE = 5000


class IdxFormatError(ValueError):
    """Raised for malformed IDX files; message names the byte offset."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n_samples, n_features) float64
    labels: np.ndarray  # (n_samples,) int64
    class_count: int
    split: str = "train"

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("features must be a nonempty 2-D matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must align with features")
        if not np.isfinite(self.features).all():
            raise ValueError("features must be finite")
        if (self.labels < 0).any() or (self.labels >= self.class_count).any():
            raise ValueError("labels must lie in [0, class_count)")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def _open(path, mode):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def _read_exact(f, n: int, path, offset: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise IdxFormatError(
            f"{path}: truncated at offset {offset}, wanted {n} bytes, got {len(data)}"
        )
    return data


def read_idx_images(path) -> np.ndarray:
    """(count, rows, cols) uint8 array from a big-endian IDX image file."""
    with _open(path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">iiii", _read_exact(f, 16, path, 0))
        if magic != IMAGE_MAGIC:
            raise IdxFormatError(
                f"{path}: bad magic 0x{magic:08x} at offset 0, expected 0x{IMAGE_MAGIC:08x}"
            )
        raw = _read_exact(f, count * rows * cols, path, 16)
    return np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    with _open(path, "rb") as f:
        magic, count = struct.unpack(">ii", _read_exact(f, 8, path, 0))
        if magic != LABEL_MAGIC:
            raise IdxFormatError(
                f"{path}: bad magic 0x{magic:08x} at offset 0, expected 0x{LABEL_MAGIC:08x}"
            )
        raw = _read_exact(f, count, path, 8)
    return np.frombuffer(raw, dtype=np.uint8)


def load_idx(images_path, labels_path, split: str = "train") -> Dataset:
    """Parse an IDX image/label pair into flat [0,1]-scaled features."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    features = images.reshape(images.shape[0], -1).astype(np.float64) / PIXEL_SCALE
    return Dataset(
        features=features,
        labels=labels.astype(np.int64),
        class_count=int(labels.max()) + 1,
        split=split,
    )


def write_idx_images(images: np.ndarray, path) -> None:
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError("images must be (count, rows, cols) uint8")
    with _open(path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGE_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(labels: np.ndarray, path) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with _open(path, "wb") as f:
        f.write(struct.pack(">ii", LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def pad_features(ds: Dataset, target_width: int, value: float = 0.0) -> Dataset:
    """Append constant columns up to target_width; labels untouched."""
    if target_width < ds.n_features:
        raise ValueError(f"target width {target_width} below current {ds.n_features}")
    if target_width == ds.n_features:
        return ds
    pad = np.full((ds.n_samples, target_width - ds.n_features), float(value))
    return replace(ds, features=np.hstack([ds.features, pad]))


@dataclass(frozen=True)
class PcaProjection:
    mean: np.ndarray  # (n_features,)
    components: np.ndarray  # (n_features, k), orthonormal columns
    explained_variance: np.ndarray  # (k,) eigenvalues, descending
    total_variance: float

    @property
    def explained_fraction(self) -> float:
        return float(self.explained_variance.sum() / self.total_variance)

    def transform(self, ds: Dataset) -> Dataset:
        reduced = (ds.features - self.mean) @ self.components
        return replace(ds, features=reduced)


def pca_reduce(train: Dataset, k: int, *others: Dataset) -> tuple[PcaProjection, list[Dataset]]:
    """Fit mean-centred top-k PCA on the training split only, apply to all splits."""
    if not 1 <= k <= train.n_features:
        raise ValueError(f"k={k} outside [1, {train.n_features}]")
    mean = train.features.mean(axis=0)
    centred = train.features - mean
    cov = centred.T @ centred / max(train.n_samples - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    top = np.argsort(eigvals)[::-1][:k]
    proj = PcaProjection(
        mean=mean,
        components=eigvecs[:, top],
        explained_variance=eigvals[top],
        total_variance=float(eigvals.sum()),
    )
    return proj, [proj.transform(d) for d in (train, *others)]


def synthetic_dataset(
    n_samples: int,
    n_features: int,
    n_classes: int,
    separation: float,
    seed: int,
    split: str = "train",
) -> Dataset:
    """Unit-variance Gaussian clusters; class means are random directions scaled
    so the typical inter-mean distance is `separation`.  Labels are balanced."""
    if min(n_samples, n_features, n_classes) < 1:
        raise ValueError("sizes must be positive")
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((n_classes, n_features))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = directions * (separation / np.sqrt(2.0))
    labels = rng.permutation(np.arange(n_samples) % n_classes)
    features = means[labels] + rng.standard_normal((n_samples, n_features))
    return Dataset(
        features=features, labels=labels.astype(np.int64), class_count=n_classes, split=split
    )


def split_train_val(ds: Dataset, val_size: int = VALIDATION_SIZE) -> tuple[Dataset, Dataset]:
    """Deterministic split: last val_size samples become the validation set."""
    if not 0 < val_size < ds.n_samples:
        raise ValueError(f"val_size {val_size} outside (0, {ds.n_samples})")
    cut = ds.n_samples - val_size
    train = replace(ds, features=ds.features[:cut], labels=ds.labels[:cut], split="train")
    val = replace(ds, features=ds.features[cut:], labels=ds.labels[cut:], split="val")
    return train, val


def load_mnist(directory, pad_to: int | None = None):
    """Load the four canonical MNIST IDX files from a directory.

    Returns (train, val, test) with the deterministic 55k/5k validation split.
    Accepts gzipped or raw files.
    """
    import os

    def find(stem):
        for name in (stem, stem + ".gz"):
            p = os.path.join(directory, name)
            if os.path.exists(p):
                return p
        raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")

    full = load_idx(
        find("train-images-idx3-ubyte"), find("train-labels-idx1-ubyte"), split="train"
    )
    test = load_idx(find("t10k-images-idx3-ubyte"), find("t10k-labels-idx1-ubyte"), split="test")
    if pad_to is not None:
        full = pad_features(full, pad_to)
        test = pad_features(test, pad_to)
    train, val = split_train_val(full)
    return train, val, test
