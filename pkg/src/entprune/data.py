"""Dataset ingestion and batching.

Covers the IDX container (MNIST layout), a self-contained synthetic
Gaussian-blob generator so everything runs without downloads, seeded
Gaussian pixel noise, and deterministic batch iteration. Images are float64
N x C x H x W in [0, 1]; datasets are read-only after construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

__all__ = [
    "Dataset",
    "NoiseSpec",
    "DataError",
    "IdxFormatError",
    "load_idx",
    "add_gaussian_noise",
    "batches",
    "synthetic_blobs",
    "split_dataset",
]

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


class DataError(Exception):
    """Base class for dataset failures."""


class IdxFormatError(DataError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64 class indices
    name: str

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"{self.name}: {self.images.shape[0]} images vs {self.labels.shape[0]} labels"
            )

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    def subset(self, indices) -> "Dataset":
        return Dataset(self.images[indices], self.labels[indices], self.name)


@dataclass(frozen=True)
class NoiseSpec:
    std: float  # pixel-intensity units, applied after [0,1] normalization
    seed: int = 0

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("noise std must be >= 0")


def load_idx(images_path, labels_path, name: str = "mnist") -> Dataset:
    """Read an IDX image/label file pair (big-endian, MNIST layout).

    Pixel bytes are scaled by 1/255. Raises IdxFormatError on a wrong magic
    number, truncated payload, or image/label count disagreement.
    """
    with open(images_path, "rb") as f:
        raw = f.read()
    if len(raw) < 16:
        raise IdxFormatError(f"{images_path}: too short for an IDX image header")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != _IDX_IMAGES_MAGIC:
        raise IdxFormatError(
            f"{images_path}: bad magic 0x{magic:08x}, expected 0x{_IDX_IMAGES_MAGIC:08x}"
        )
    if len(raw) != 16 + n * rows * cols:
        raise IdxFormatError(f"{images_path}: payload length does not match header counts")
    images = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, 1, rows, cols)
    images = images.astype(np.float64) / 255.0

    with open(labels_path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise IdxFormatError(f"{labels_path}: too short for an IDX label header")
    magic, n_labels = struct.unpack(">II", raw[:8])
    if magic != _IDX_LABELS_MAGIC:
        raise IdxFormatError(
            f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{_IDX_LABELS_MAGIC:08x}"
        )
    if len(raw) != 8 + n_labels:
        raise IdxFormatError(f"{labels_path}: payload length does not match header count")
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8).astype(np.int64)
    if n_labels != n:
        raise IdxFormatError(f"count mismatch: {n} images vs {n_labels} labels")
    return Dataset(images, labels, name)


def write_idx(dataset: Dataset, images_path, labels_path) -> None:
    """Write a dataset back to an IDX pair (images quantized to bytes)."""
    n, c, h, w = dataset.images.shape
    if c != 1:
        raise DataError("IDX image files are single-channel")
    pixels = np.rint(dataset.images * 255.0).clip(0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", _IDX_IMAGES_MAGIC, n, h, w))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", _IDX_LABELS_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def add_gaussian_noise(ds: Dataset, spec: NoiseSpec) -> Dataset:
    """pixel' = clamp(pixel + N(0, std^2), 0, 1), deterministic per seed."""
    if spec.std == 0.0:
        return Dataset(ds.images.copy(), ds.labels.copy(), ds.name)
    rng = np.random.default_rng(spec.seed)
    noised = ds.images + rng.normal(0.0, spec.std, size=ds.images.shape)
    return Dataset(np.clip(noised, 0.0, 1.0), ds.labels.copy(), ds.name)


class Batch(NamedTuple):
    images: np.ndarray
    labels: np.ndarray
    indices: np.ndarray


def batches(ds: Dataset, batch_size: int, shuffle_seed: int | None = None) -> Iterator[Batch]:
    """Yield dataset batches; a seeded permutation when shuffle_seed is given,
    original order otherwise. The last partial batch is kept."""
    if batch_size < 1:
        raise DataError("batch_size must be >= 1")
    order = np.arange(len(ds))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(ds))
    for start in range(0, len(ds), batch_size):
        idx = order[start : start + batch_size]
        yield Batch(ds.images[idx], ds.labels[idx], idx)


def split_dataset(ds: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded split into (rest, held_out); held_out gets round(fraction*N) samples."""
    n_hold = int(round(fraction * len(ds)))
    order = np.random.default_rng(seed).permutation(len(ds))
    hold, rest = order[:n_hold], order[n_hold:]
    return ds.subset(np.sort(rest)), ds.subset(np.sort(hold))


def synthetic_blobs(
    n: int,
    num_classes: int = 10,
    image_size: int = 28,
    seed: int = 0,
    blobs_per_class: int = 3,
    jitter: float | None = None,
    pixel_noise: float = 0.05,
    name: str = "synthetic",
) -> Dataset:
    """Gaussian-blob classification images, fully seeded.

    Each class owns a fixed set of blob centers; every sample renders those
    blobs with a per-sample position jitter and amplitude wobble plus pixel
    noise, clamped to [0, 1]. Blob geometry scales with image_size so small
    fast variants stay learnable. Trivial to regenerate, no downloads.
    """
    rng = np.random.default_rng(seed)
    if jitter is None:
        jitter = 0.07 * image_size
    margin = image_size / 5.0
    centers = rng.uniform(margin, image_size - margin, size=(num_classes, blobs_per_class, 2))
    widths = rng.uniform(0.064, 0.114, size=(num_classes, blobs_per_class)) * image_size

    labels = rng.integers(0, num_classes, size=n)
    yy, xx = np.mgrid[0:image_size, 0:image_size]
    images = np.zeros((n, 1, image_size, image_size))
    for i in range(n):
        c = labels[i]
        img = np.zeros((image_size, image_size))
        offsets = rng.normal(0.0, jitter, size=(blobs_per_class, 2))
        amps = rng.uniform(0.7, 1.0, size=blobs_per_class)
        for k in range(blobs_per_class):
            cy, cx = centers[c, k] + offsets[k]
            img += amps[k] * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * widths[c, k] ** 2))
        img += rng.normal(0.0, pixel_noise, size=img.shape)
        images[i, 0] = img
    return Dataset(np.clip(images, 0.0, 1.0), labels.astype(np.int64), name)
