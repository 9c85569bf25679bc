"""MNIST IDX ingestion and binary-class datasets."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import EmptyClassError, FormatError, InvalidArgumentError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
DATA_ENV = "ANALOG_SHARDS_MNIST"
DEFAULT_DATA_DIR = "/root/data/mnist"

TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


@dataclass(frozen=True)
class RawDataset:
    images: np.ndarray  # (count, rows*cols) uint8
    labels: np.ndarray  # (count,) uint8
    rows: int
    cols: int


@dataclass(frozen=True)
class Dataset:
    """Binary classification data: rows of ``X`` are samples, ``labels`` in {0, 1}.

    ``class_map`` is ``(digit labelled 1, digit labelled 0)``.
    """

    X: np.ndarray
    labels: np.ndarray
    class_map: tuple[int, int] = (1, 0)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=float)
        labels = np.asarray(self.labels, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise InvalidArgumentError(f"X must be a non-empty matrix, got shape {X.shape}")
        if labels.shape != (X.shape[0],):
            raise InvalidArgumentError(f"need {X.shape[0]} labels, got shape {labels.shape}")
        if not np.all((labels == 0) | (labels == 1)):
            raise InvalidArgumentError("labels must be 0 or 1")
        X.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.X)))


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(blob: bytes, expected_magic: int, ndim: int, what: str):
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise FormatError(f"{what}: truncated header, expected {header} bytes, got {len(blob)}")
    (magic,) = struct.unpack_from(">I", blob, 0)
    if magic != expected_magic:
        raise FormatError(f"{what}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    dims = struct.unpack_from(f">{ndim}I", blob, 4)
    expected = header + int(np.prod(dims, dtype=np.int64))
    if len(blob) != expected:
        kind = "truncated payload" if len(blob) < expected else "trailing bytes"
        raise FormatError(f"{what}: {kind}, expected {expected} bytes, got {len(blob)}")
    data = np.frombuffer(blob, dtype=np.uint8, offset=header)
    return dims, data


def load_mnist_idx(images_path, labels_path) -> RawDataset:
    """Parse an IDX image file and its label file (``.gz`` is decompressed).

    Raises:
        FormatError: bad magic, truncated file, or image/label count mismatch.
    """
    (count, rows, cols), pixels = _parse_idx(_read_bytes(images_path), IMAGES_MAGIC, 3, "images")
    (n_labels,), labels = _parse_idx(_read_bytes(labels_path), LABELS_MAGIC, 1, "labels")
    if n_labels != count:
        raise FormatError(f"count mismatch: {count} images but {n_labels} labels")
    return RawDataset(pixels.reshape(count, rows * cols), labels, rows, cols)


def mnist_dir() -> Path:
    return Path(os.environ.get(DATA_ENV, DEFAULT_DATA_DIR))


def load_mnist_split(split: str = "train", directory=None) -> RawDataset:
    """Load ``train`` or ``test`` from a directory holding the four IDX files (optionally gzipped)."""
    names = {"train": TRAIN_FILES, "test": TEST_FILES}.get(split)
    if names is None:
        raise InvalidArgumentError(f"split must be 'train' or 'test', got {split!r}")
    base = Path(directory) if directory is not None else mnist_dir()
    paths = []
    for name in names:
        plain, zipped = base / name, base / f"{name}.gz"
        paths.append(plain if plain.exists() or not zipped.exists() else zipped)
    return load_mnist_idx(*paths)


SCALES = {"raw": 1.0, "unit": 1.0 / 255.0}


def filter_binary(
    raw: RawDataset,
    class_a: int,
    class_b: int,
    per_class: int | None = None,
    seed: int = 0,
    scale: str = "raw",
) -> Dataset:
    """Keep digits ``class_a`` (label 1) and ``class_b`` (label 0).

    Args:
        per_class: if given, draw this many samples of each class without
            replacement (seeded); otherwise keep every sample in file order.
        scale: ``raw`` keeps pixels in [0, 255]; ``unit`` divides by 255.

    Raises:
        EmptyClassError: a digit has no samples (or fewer than ``per_class``).
    """
    if scale not in SCALES:
        raise InvalidArgumentError(f"scale must be one of {sorted(SCALES)}, got {scale!r}")
    if class_a == class_b:
        raise InvalidArgumentError("the two classes must differ")
    idx_a = np.flatnonzero(raw.labels == class_a)
    idx_b = np.flatnonzero(raw.labels == class_b)
    for digit, idx in ((class_a, idx_a), (class_b, idx_b)):
        if idx.size == 0:
            raise EmptyClassError(f"digit {digit} has no samples")
        if per_class is not None and idx.size < per_class:
            raise EmptyClassError(f"digit {digit} has {idx.size} samples, {per_class} requested")
    if per_class is not None:
        if per_class < 1:
            raise InvalidArgumentError(f"per_class must be >= 1, got {per_class}")
        rng = np.random.default_rng(seed)
        keep = np.concatenate([rng.choice(idx_a, per_class, replace=False),
                               rng.choice(idx_b, per_class, replace=False)])
        keep = rng.permutation(keep)
    else:
        keep = np.sort(np.concatenate([idx_a, idx_b]))
    X = raw.images[keep].astype(float) * SCALES[scale]
    labels = (raw.labels[keep] == class_a).astype(float)
    return Dataset(X, labels, (class_a, class_b))


def subsample(data: Dataset, per_class: int, rng: np.random.Generator) -> Dataset:
    """Balanced draw of ``per_class`` samples of each label from an existing Dataset."""
    ones = np.flatnonzero(data.labels == 1)
    zeros = np.flatnonzero(data.labels == 0)
    if min(ones.size, zeros.size) < per_class:
        raise EmptyClassError(f"need {per_class} samples per class, have {ones.size} and {zeros.size}")
    keep = rng.permutation(np.concatenate([rng.choice(ones, per_class, replace=False),
                                           rng.choice(zeros, per_class, replace=False)]))
    return Dataset(data.X[keep], data.labels[keep], data.class_map)
