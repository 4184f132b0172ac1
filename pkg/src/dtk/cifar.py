"""Readers for the CIFAR binary distributions plus split, standardize, augment.

Record layouts (all little things, but they are the wire contract):
  CIFAR-10:  1 label byte + 3072 pixel bytes (1024 R, 1024 G, 1024 B, row-major);
             files are exactly 10,000 records = 30,730,000 bytes each.
  CIFAR-100: 1 coarse-label byte + 1 fine-label byte + 3072 pixel bytes;
             train file holds 50,000 records, test 10,000.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, FormatError, InputError

RECORD10 = 3073
RECORD100 = 3074
FILE10_BYTES = 10_000 * RECORD10

CIFAR10_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR10_TEST_FILE = "test_batch.bin"
CIFAR100_TRAIN_FILE = "train.bin"
CIFAR100_TEST_FILE = "test.bin"


@dataclass
class RawDataset:
    """Undecoded-unit dataset: uint8 pixels, integer labels."""

    images: np.ndarray  # uint8 [N,3,32,32]
    labels: np.ndarray  # int64 [N]
    coarse_labels: Optional[np.ndarray] = None

    def __len__(self):
        return self.images.shape[0]

    def take(self, n: int) -> "RawDataset":
        coarse = None if self.coarse_labels is None else self.coarse_labels[:n]
        return RawDataset(self.images[:n], self.labels[:n], coarse)


def decode_cifar10_bytes(blob: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Decode raw record bytes into ([N,3,32,32] uint8, [N] int64)."""
    if len(blob) % RECORD10:
        raise FormatError(f"byte length {len(blob)} is not a multiple of {RECORD10}")
    records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, RECORD10)
    labels = records[:, 0].astype(np.int64)
    if labels.size and labels.max() >= 10:
        raise FormatError(f"label byte {labels.max()} out of range for 10 classes")
    images = records[:, 1:].reshape(-1, 3, 32, 32).copy()
    return images, labels


def decode_cifar100_bytes(blob: bytes) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decode raw record bytes into (images, fine labels, coarse labels)."""
    if len(blob) % RECORD100:
        raise FormatError(f"byte length {len(blob)} is not a multiple of {RECORD100}")
    records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, RECORD100)
    coarse = records[:, 0].astype(np.int64)
    fine = records[:, 1].astype(np.int64)
    if fine.size and fine.max() >= 100:
        raise FormatError(f"fine label byte {fine.max()} out of range for 100 classes")
    if coarse.size and coarse.max() >= 20:
        raise FormatError(f"coarse label byte {coarse.max()} out of range for 20 superclasses")
    images = records[:, 2:].reshape(-1, 3, 32, 32).copy()
    return images, fine, coarse


def _read_exact(path: Path, expected_bytes: int) -> bytes:
    if not path.is_file():
        raise FormatError(f"missing dataset file {path}")
    blob = path.read_bytes()
    if len(blob) != expected_bytes:
        raise FormatError(f"{path} is {len(blob)} bytes, expected exactly {expected_bytes}")
    return blob


def load_cifar10(data_dir: str | Path) -> tuple[RawDataset, RawDataset]:
    """Load the five training batches and the test batch."""
    data_dir = Path(data_dir)
    parts = [decode_cifar10_bytes(_read_exact(data_dir / f, FILE10_BYTES)) for f in CIFAR10_TRAIN_FILES]
    train = RawDataset(
        np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    )
    timg, tlab = decode_cifar10_bytes(_read_exact(data_dir / CIFAR10_TEST_FILE, FILE10_BYTES))
    return train, RawDataset(timg, tlab)


def load_cifar100(data_dir: str | Path) -> tuple[RawDataset, RawDataset]:
    """Load the train/test files; fine labels drive training, coarse kept as metadata."""
    data_dir = Path(data_dir)
    img, fine, coarse = decode_cifar100_bytes(
        _read_exact(data_dir / CIFAR100_TRAIN_FILE, 50_000 * RECORD100)
    )
    train = RawDataset(img, fine, coarse)
    img, fine, coarse = decode_cifar100_bytes(
        _read_exact(data_dir / CIFAR100_TEST_FILE, 10_000 * RECORD100)
    )
    return train, RawDataset(img, fine, coarse)


def split(pool: RawDataset, seed: int) -> tuple[RawDataset, RawDataset]:
    """Seeded disjoint 40k/10k partition of the 50k training pool."""
    if len(pool) != 50_000:
        raise InputError(f"split needs a 50,000-record pool, got {len(pool)}")
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(50_000)
    train_idx, val_idx = perm[:40_000], perm[40_000:]

    def pick(idx):
        coarse = None if pool.coarse_labels is None else pool.coarse_labels[idx]
        return RawDataset(pool.images[idx], pool.labels[idx], coarse)

    return pick(train_idx), pick(val_idx)


@dataclass(frozen=True)
class ChannelStats:
    mean: np.ndarray  # float64 [3]
    std: np.ndarray  # float64 [3], floored at 1e-7


def standardize(images: np.ndarray, stats: Optional[ChannelStats] = None):
    """Per-channel (x - mean) / std in float32.

    Statistics come from the training split; pass them back in for the
    validation and test splits so every split shares the same units.
    """
    x = images.astype(np.float64, copy=False)
    if stats is None:
        mean = x.mean(axis=(0, 2, 3))
        std = np.maximum(x.std(axis=(0, 2, 3)), 1e-7)
        stats = ChannelStats(mean=mean, std=std)
    out = (x - stats.mean[None, :, None, None]) / stats.std[None, :, None, None]
    return out.astype(np.float32), stats


@dataclass(frozen=True)
class AugmentConfig:
    horizontal_flip: bool = True
    vertical_flip: bool = True
    rotation_range_deg: float = 30.0
    shift_range_fraction: float = 0.3
    zoom_range: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if min(self.rotation_range_deg, self.shift_range_fraction, self.zoom_range) < 0:
            raise ConfigError("augmentation ranges must be nonnegative")
        if self.rotation_range_deg > 180:
            raise ConfigError("rotation range cannot exceed 180 degrees")


def flip_horizontal(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image[:, :, ::-1])


def flip_vertical(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image[:, ::-1, :])


def apply_affine(image: np.ndarray, angle_deg: float, shift: tuple[float, float],
                 zoom: float) -> np.ndarray:
    """Rotate, then shift, then zoom about the image center, one bilinear resample.

    Out-of-bounds samples read as 0, the standardized mean.
    """
    _, h, w = image.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(-theta), math.sin(-theta)

    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                             indexing="ij")
    # Invert the composed map: un-zoom, un-shift, then un-rotate.
    qy = (rows - cy) / zoom - shift[0]
    qx = (cols - cx) / zoom - shift[1]
    sy = cy + cos_t * qy - sin_t * qx
    sx = cx + sin_t * qy + cos_t * qx

    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    wy = sy - y0
    wx = sx - x0

    out = np.zeros_like(image, dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            yy = y0 + dy
            xx = x0 + dx
            inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            weight = (wy if dy else 1.0 - wy) * (wx if dx else 1.0 - wx)
            vals = image[:, np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
            out += np.where(inside, weight, 0.0)[None] * vals
    return out.astype(image.dtype)


def augment(image: np.ndarray, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """One randomly transformed copy of a standardized [3,H,W] image.

    Order: horizontal flip (p=0.5), vertical flip (p=0.5), rotation uniform in
    +-rotation_range, shift uniform in +-shift_fraction of each extent, zoom
    uniform in [1-z, 1+z]. Shape and label are never changed.
    """
    out = image
    if config.horizontal_flip and rng.uniform() < 0.5:
        out = flip_horizontal(out)
    if config.vertical_flip and rng.uniform() < 0.5:
        out = flip_vertical(out)
    angle = rng.uniform(-config.rotation_range_deg, config.rotation_range_deg)
    dy = rng.uniform(-config.shift_range_fraction, config.shift_range_fraction) * image.shape[1]
    dx = rng.uniform(-config.shift_range_fraction, config.shift_range_fraction) * image.shape[2]
    zoom = rng.uniform(1.0 - config.zoom_range, 1.0 + config.zoom_range)
    if angle == 0.0 and dy == 0.0 and dx == 0.0 and zoom == 1.0:
        return np.ascontiguousarray(out)
    return apply_affine(out, angle, (dy, dx), zoom)
