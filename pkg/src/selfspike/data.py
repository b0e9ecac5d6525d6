"""Datasets: IDX files, row-sequenced images, and the synthetic task.

An image dataset becomes a sequence task by feeding one image row per
timestep, scaled to [0, 1] (row-major top to bottom, T = height, input
width = image width).

The synthetic task draws one distinct random binary template per class and
emits each sample as T noisy copies of its class template: the early half
of the steps is flipped at rate ``early_flip`` (0.5 by default, pure
noise), the late half at ``late_flip`` (0.1), so only late steps carry
label information and temporal credit assignment is required. Labels cycle
round-robin, keeping classes balanced.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .rng import Rng

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049


@dataclass
class Dataset:
    """Frame sequences (N, T, width) in [0, 1] with integer labels."""

    frames: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.frames.ndim != 3:
            raise DataFormatError(f"frames must be (N, T, width), got shape {self.frames.shape}")
        if self.labels.shape != (self.frames.shape[0],):
            raise DataFormatError(
                f"labels shape {self.labels.shape} does not match {self.frames.shape[0]} samples")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataFormatError(f"labels out of range [0, {self.n_classes})")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def timesteps(self) -> int:
        return self.frames.shape[1]

    @property
    def input_width(self) -> int:
        return self.frames.shape[2]


def _read_exact(fh, n: int, path: str, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataFormatError(f"{path}: truncated while reading {what} "
                              f"(wanted {n} bytes, got {len(buf)})")
    return buf


def read_idx_images(path: str) -> np.ndarray:
    """(N, rows, cols) uint8 array from an images file (magic 2051)."""
    with open(path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(">iiii", _read_exact(fh, 16, path, "header"))
        if magic != IDX_IMAGES_MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic}, expected {IDX_IMAGES_MAGIC}")
        if n < 0 or rows <= 0 or cols <= 0:
            raise DataFormatError(f"{path}: bad dimensions ({n}, {rows}, {cols})")
        payload = _read_exact(fh, n * rows * cols, path, "pixel data")
        if fh.read(1):
            raise DataFormatError(f"{path}: trailing bytes after pixel data")
    return np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols)


def read_idx_labels(path: str) -> np.ndarray:
    """(N,) uint8 array from a labels file (magic 2049)."""
    with open(path, "rb") as fh:
        magic, n = struct.unpack(">ii", _read_exact(fh, 8, path, "header"))
        if magic != IDX_LABELS_MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic}, expected {IDX_LABELS_MAGIC}")
        if n < 0:
            raise DataFormatError(f"{path}: negative item count {n}")
        payload = _read_exact(fh, n, path, "label data")
        if fh.read(1):
            raise DataFormatError(f"{path}: trailing bytes after label data")
    return np.frombuffer(payload, dtype=np.uint8)


def write_idx_images(path: str, images: np.ndarray) -> None:
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise DataFormatError(f"images must be (N, rows, cols), got shape {images.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">iiii", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise DataFormatError(f"labels must be one-dimensional, got shape {labels.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">ii", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def load_idx(images_path: str, labels_path: str) -> tuple[np.ndarray, np.ndarray]:
    """Paired images and labels, checked for matching counts."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images_path} has {images.shape[0]} images but "
            f"{labels_path} has {labels.shape[0]} labels")
    return images, labels


def frame_rows(images: np.ndarray, labels: np.ndarray, n_classes: int = 10) -> Dataset:
    """Row-per-timestep sequence view of an image set, scaled by 1/255."""
    images = np.asarray(images)
    if images.ndim != 3:
        raise DataFormatError(f"images must be (N, rows, cols), got shape {images.shape}")
    frames = images.astype(np.float64) / 255.0
    return Dataset(frames=frames, labels=np.asarray(labels, dtype=np.int64),
                   n_classes=n_classes)


def dataset_to_uint8(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of frame_rows' scaling: frames * 255 rounded to uint8."""
    images = np.clip(np.rint(ds.frames * 255.0), 0, 255).astype(np.uint8)
    return images, ds.labels.astype(np.uint8)


def synth_pattern(
    rng: Rng,
    n_samples: int,
    timesteps: int,
    width: int,
    n_classes: int,
    late_flip: float = 0.1,
    early_flip: float = 0.5,
) -> Dataset:
    """Template-plus-noise synthetic task (see module docstring)."""
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    if width <= 0 or timesteps <= 0 or n_samples <= 0:
        raise ValueError(f"bad shape: n_samples={n_samples}, timesteps={timesteps}, width={width}")
    if n_classes > 2 ** width:
        raise ValueError(
            f"cannot draw {n_classes} distinct binary templates of width {width}")
    for name, p in (("late_flip", late_flip), ("early_flip", early_flip)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {p}")

    templates = np.empty((n_classes, width), dtype=np.float64)
    seen: set[tuple] = set()
    for c in range(n_classes):
        while True:
            bits = (rng.uniform_array(width) < 0.5).astype(np.float64)
            key = tuple(bits.astype(np.int64).tolist())
            if key not in seen:
                seen.add(key)
                templates[c] = bits
                break

    labels = np.arange(n_samples, dtype=np.int64) % n_classes
    draws = rng.uniform_array(n_samples * timesteps * width).reshape(
        n_samples, timesteps, width)
    late_start = (timesteps + 1) // 2
    flip_prob = np.where(np.arange(timesteps) >= late_start, late_flip, early_flip)
    flips = draws < flip_prob[None, :, None]
    base = templates[labels][:, None, :]  # (N, 1, width) broadcast over time
    frames = np.where(flips, 1.0 - base, base)
    return Dataset(frames=frames, labels=labels, n_classes=n_classes)


def batches(ds: Dataset, batch_size: int, rng: Rng | None = None):
    """Yield (X (B, T, width), y (B,)) minibatches; the final short batch is
    kept. With an rng the order is a fresh Fisher-Yates shuffle, else
    sequential."""
    if batch_size <= 0:
        raise ValueError(f"batch_size must be positive, got {batch_size}")
    order = np.arange(len(ds))
    if rng is not None:
        rng.shuffle(order)
    for start in range(0, len(ds), batch_size):
        idx = order[start:start + batch_size]
        yield ds.frames[idx], ds.labels[idx]
