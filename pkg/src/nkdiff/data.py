"""Training data: synthetic Gaussian blobs, IDX file I/O, label corruption.

All generators are pure functions of their seeds. Datasets are treated as
immutable once built and can be shared freely between threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
IDX_CLASSES = 10

CORRUPTION_MODES = ("uniform_replace", "full_random")


class IdxFormatError(ValueError):
    """Base class for IDX parse failures."""


class IdxMagicError(IdxFormatError):
    """File does not start with the expected magic number."""


class IdxTruncatedError(IdxFormatError):
    """File ended before the declared payload was read."""


class IdxCountMismatchError(IdxFormatError):
    """Image count and label count disagree."""


@dataclass
class Dataset:
    """Feature matrix X with integer labels y in [0, K)."""

    X: np.ndarray
    y: np.ndarray
    K: int
    split: str = "train"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {self.X.shape}")
        if len(self.X) != len(self.y):
            raise ValueError(f"{len(self.X)} rows but {len(self.y)} labels")
        if self.K < 2:
            raise ValueError("need at least 2 classes")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.K):
            raise ValueError(f"labels must lie in [0, {self.K})")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def take(self, indices: np.ndarray, split: str) -> "Dataset":
        return Dataset(X=self.X[indices], y=self.y[indices], K=self.K, split=split)

    def with_labels(self, y: np.ndarray) -> "Dataset":
        return Dataset(X=self.X, y=y, K=self.K, split=self.split)


@dataclass(frozen=True)
class CorruptionSpec:
    """How to damage a label vector: replace a fraction, or redraw all."""

    fraction: float
    mode: str = "uniform_replace"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fraction must lie in [0, 1], got {self.fraction}")
        if self.mode not in CORRUPTION_MODES:
            raise ValueError(f"mode must be one of {CORRUPTION_MODES}, got {self.mode!r}")


def gen_blobs(
    n_per_class: int,
    K: int,
    d: int,
    centers_scale: float = 1.0,
    noise_sigma: float = 1.0,
    seed: int = 0,
) -> Dataset:
    """Isotropic Gaussian blobs: K classes, n_per_class points each.

    Centers are standard normal scaled by ``centers_scale``; points add
    N(0, noise_sigma^2 I) around their center. Rows come back shuffled,
    deterministically in ``seed``.
    """
    if K < 2:
        raise ValueError("need at least 2 classes")
    if d < 1:
        raise ValueError("need at least 1 feature dimension")
    if n_per_class < 1:
        raise ValueError("need at least 1 point per class")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    rng = np.random.default_rng(seed)
    centers = centers_scale * rng.standard_normal((K, d))
    y = np.repeat(np.arange(K, dtype=np.int64), n_per_class)
    X = centers[y] + noise_sigma * rng.standard_normal((K * n_per_class, d))
    order = rng.permutation(len(y))
    return Dataset(X=X[order], y=y[order], K=K)


def split_dataset(
    ds: Dataset, train_frac: float, val_frac: float, seed: int = 0
) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint train/validation/test partition covering every row."""
    if train_frac <= 0 or val_frac <= 0:
        raise ValueError("split fractions must be positive")
    if train_frac + val_frac >= 1.0:
        raise ValueError("train_frac + val_frac must leave room for a test split")
    n = len(ds)
    n_train = round(n * train_frac)
    n_val = round(n * val_frac)
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(
            f"degenerate split {n_train}/{n_val}/{n_test} for {n} rows"
        )
    order = np.random.default_rng(seed).permutation(n)
    return (
        ds.take(order[:n_train], "train"),
        ds.take(order[n_train : n_train + n_val], "validation"),
        ds.take(order[n_train + n_val :], "test"),
    )


# Corruption streams are namespaced so a corruption seed never replays the
# stream of a dataset generated from the same integer.
_SELECT_STREAM = 10
_REPLACE_STREAM = 11
_REDRAW_STREAM = 12


def corruption_indices(n: int, fraction: float, seed: int) -> np.ndarray:
    """The exact floor(fraction * n) row indices selected for replacement."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    m = int(np.floor(fraction * n))
    rng = np.random.default_rng(np.random.SeedSequence((seed, _SELECT_STREAM)))
    return rng.choice(n, size=m, replace=False)


def corrupt_labels(y: np.ndarray, spec: CorruptionSpec, K: int) -> np.ndarray:
    """Return a damaged copy of y; the input vector is never modified.

    ``uniform_replace`` redraws exactly floor(fraction * n) positions
    uniformly over all K classes (symmetric noise: a redraw may coincide
    with the original label). ``full_random`` redraws every position.
    """
    y = np.asarray(y, dtype=np.int64)
    if len(y) and (y.min() < 0 or y.max() >= K):
        raise ValueError(f"labels must lie in [0, {K})")
    if spec.mode == "full_random":
        rng = np.random.default_rng(np.random.SeedSequence((spec.seed, _REDRAW_STREAM)))
        return rng.integers(0, K, size=len(y), dtype=np.int64)
    idx = corruption_indices(len(y), spec.fraction, spec.seed)
    out = y.copy()
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, _REPLACE_STREAM)))
    out[idx] = rng.integers(0, K, size=len(idx), dtype=np.int64)
    return out


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label file pair into a flat-feature Dataset.

    Pixels are scaled to [0, 1]; labels are taken verbatim with K = 10.
    """
    with open(images_path, "rb") as f:
        header = f.read(16)
        if len(header) < 4:
            raise IdxTruncatedError(f"{images_path}: no room for a magic number")
        magic = struct.unpack(">I", header[:4])[0]
        if magic != IDX_IMAGES_MAGIC:
            raise IdxMagicError(
                f"{images_path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        if len(header) < 16:
            raise IdxTruncatedError(f"{images_path}: truncated header")
        n_images, rows, cols = struct.unpack(">III", header[4:16])
        payload = f.read()
    expected = n_images * rows * cols
    if len(payload) < expected:
        raise IdxTruncatedError(
            f"{images_path}: expected {expected} pixel bytes, found {len(payload)}"
        )
    pixels = np.frombuffer(payload[:expected], dtype=np.uint8)

    with open(labels_path, "rb") as f:
        header = f.read(8)
        if len(header) < 4:
            raise IdxTruncatedError(f"{labels_path}: no room for a magic number")
        magic = struct.unpack(">I", header[:4])[0]
        if magic != IDX_LABELS_MAGIC:
            raise IdxMagicError(
                f"{labels_path}: magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        if len(header) < 8:
            raise IdxTruncatedError(f"{labels_path}: truncated header")
        n_labels = struct.unpack(">I", header[4:8])[0]
        label_bytes = f.read()
    if len(label_bytes) < n_labels:
        raise IdxTruncatedError(
            f"{labels_path}: expected {n_labels} label bytes, found {len(label_bytes)}"
        )
    if n_images != n_labels:
        raise IdxCountMismatchError(
            f"{n_images} images but {n_labels} labels"
        )
    labels = np.frombuffer(label_bytes[:n_labels], dtype=np.uint8).astype(np.int64)
    if len(labels) and labels.max() >= IDX_CLASSES:
        raise IdxFormatError(f"label {labels.max()} outside [0, {IDX_CLASSES})")

    X = pixels.reshape(n_images, rows * cols).astype(np.float64) / 255.0
    return Dataset(X=X, y=labels, K=IDX_CLASSES)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images of shape (n, rows, cols) and labels as IDX files."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim != 3 or images.dtype != np.uint8:
        raise ValueError(f"images must be uint8 of shape (n, rows, cols), got {images.dtype} {images.shape}")
    if labels.shape != (len(images),):
        raise ValueError(f"{len(images)} images but label shape {labels.shape}")
    if len(labels) and (labels.min() < 0 or labels.max() >= IDX_CLASSES):
        raise ValueError(f"labels must lie in [0, {IDX_CLASSES})")
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(labels.astype(np.uint8).tobytes())


@dataclass(frozen=True)
class BlobsSpec:
    """Config for a blobs-backed experiment dataset."""

    n_per_class: int = 334
    k: int = 3
    d: int = 10
    centers_scale: float = 1.0
    noise_sigma: float = 1.5
    seed: int = 7
    train_frac: float = 0.6
    val_frac: float = 0.2


@dataclass(frozen=True)
class IdxSpec:
    """Config for an IDX-backed experiment dataset.

    Validation is carved out of the training files; the test files are
    used as-is.
    """

    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    val_frac: float = 0.1
    seed: int = 7


def build_datasets(spec) -> tuple[Dataset, Dataset, Dataset]:
    """Materialize (train, validation, test) from a dataset config."""
    if isinstance(spec, BlobsSpec):
        pool = gen_blobs(
            n_per_class=spec.n_per_class,
            K=spec.k,
            d=spec.d,
            centers_scale=spec.centers_scale,
            noise_sigma=spec.noise_sigma,
            seed=spec.seed,
        )
        return split_dataset(pool, spec.train_frac, spec.val_frac, seed=spec.seed)
    if isinstance(spec, IdxSpec):
        full_train = load_idx(spec.train_images, spec.train_labels)
        test = load_idx(spec.test_images, spec.test_labels)
        test = replace(test, split="test")
        n = len(full_train)
        n_val = round(n * spec.val_frac)
        if n_val < 1 or n - n_val < 1:
            raise ValueError(f"degenerate validation carve-out for {n} rows")
        order = np.random.default_rng(spec.seed).permutation(n)
        train = full_train.take(order[n_val:], "train")
        val = full_train.take(order[:n_val], "validation")
        return train, val, test
    raise TypeError(f"unknown dataset spec {type(spec).__name__}")
