"""Dataset ingestion, synthetic data generation, and forget/retain splits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .validation import check_images, check_labels

__all__ = [
    "LabeledDataset",
    "Partition",
    "load_cifar10",
    "partition",
    "synth_dataset",
]

CIFAR10_RECORD_BYTES = 3073  # 1 label byte + 3*32*32 pixel bytes
CIFAR10_CLASSES = 10


@dataclass
class LabeledDataset:
    """Images in [0, 1] with integer labels and a fixed class index."""

    images: np.ndarray  # (N, C, H, W) float32
    labels: np.ndarray  # (N,) int64
    class_count: int

    def __post_init__(self):
        self.images = check_images(self.images, name="images")
        self.labels = check_labels(
            self.labels, n_samples=self.images.shape[0],
            class_count=self.class_count, name="labels",
        )
        lo = float(self.images.min())
        hi = float(self.images.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"image values outside [0, 1]: min={lo}, max={hi}")

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.images[idx], self.labels[idx], self.class_count)

    def class_subset(self, classes) -> "LabeledDataset":
        mask = np.isin(self.labels, np.asarray(sorted(classes), dtype=np.int64))
        return LabeledDataset(self.images[mask], self.labels[mask], self.class_count)


@dataclass
class Partition:
    """A dataset split into the samples to forget and the samples to retain."""

    forget: LabeledDataset
    retain: LabeledDataset
    forget_classes: frozenset = field(default_factory=frozenset)


def partition(dataset: LabeledDataset, forget_classes) -> Partition:
    """Split by label membership, preserving sample order on both sides."""
    forget_set = frozenset(int(c) for c in forget_classes)
    if not forget_set:
        raise ValueError("forget_classes is empty")
    if any(c < 0 or c >= dataset.class_count for c in forget_set):
        raise ValueError(
            f"forget_classes {sorted(forget_set)} outside [0, {dataset.class_count})"
        )
    if len(forget_set) >= dataset.class_count:
        raise ValueError("forget_classes covers every class; nothing would remain")
    mask = np.isin(dataset.labels, np.asarray(sorted(forget_set), dtype=np.int64))
    forget = LabeledDataset(dataset.images[mask], dataset.labels[mask], dataset.class_count)
    retain = LabeledDataset(dataset.images[~mask], dataset.labels[~mask], dataset.class_count)
    return Partition(forget=forget, retain=retain, forget_classes=forget_set)


def load_cifar10(paths) -> LabeledDataset:
    """Load CIFAR-10 binary batch files (label byte + 3072 RGB plane bytes).

    Records are kept in file order; pixels are scaled by 1/255.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    if not paths:
        raise ValueError("no CIFAR-10 files given")
    images = []
    labels = []
    base_record = 0
    for path in paths:
        raw = Path(path).read_bytes()
        if len(raw) == 0 or len(raw) % CIFAR10_RECORD_BYTES != 0:
            raise ValueError(
                f"{path}: length {len(raw)} is not a positive multiple of "
                f"{CIFAR10_RECORD_BYTES}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR10_RECORD_BYTES)
        file_labels = records[:, 0]
        bad = np.nonzero(file_labels >= CIFAR10_CLASSES)[0]
        if bad.size:
            raise ValueError(
                f"{path}: record {base_record + int(bad[0])} has label byte "
                f"{int(file_labels[bad[0]])} >= {CIFAR10_CLASSES}"
            )
        pixels = records[:, 1:].reshape(-1, 3, 32, 32)
        images.append(pixels.astype(np.float32) / 255.0)
        labels.append(file_labels.astype(np.int64))
        base_record += records.shape[0]
    return LabeledDataset(
        np.concatenate(images, axis=0), np.concatenate(labels, axis=0), CIFAR10_CLASSES
    )


def _class_anchors(class_count: int, side: int, patch: int, spread: int) -> list[tuple[int, int]]:
    """Grid anchor (row, col) per class, clustered so patch regions overlap."""
    grid = math.ceil(math.sqrt(class_count))
    center = (side - patch) // 2
    anchors = []
    for c in range(class_count):
        gr, gc = divmod(c, grid)
        if grid == 1:
            anchors.append((center, center))
            continue
        row = center - spread + round(2 * spread * gr / (grid - 1))
        col = center - spread + round(2 * spread * gc / (grid - 1))
        anchors.append((row, col))
    return anchors


def synth_dataset(seed: int, class_count: int, per_class: int, side: int) -> LabeledDataset:
    """Deterministic single-channel dataset of textured square patches.

    Class c is a bright square patch anchored at a class-specific grid
    location and filled with stripes at a class-specific orientation, so
    class evidence lives in pattern-selective conv filters rather than in
    position alone. Per sample, the stripe phase, a stripe-dropout rate, a
    small occlusion square, and a position jitter around the class anchor
    vary the difficulty; uniform noise of amplitude 0.1 covers the image.
    """
    if class_count < 2:
        raise ValueError(f"class_count must be >= 2, got {class_count}")
    if side < 8:
        raise ValueError(f"side must be >= 8, got {side}")
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")

    patch = max(6, (side * 3) // 7)        # 12 on the default 28x28 canvas
    jitter = max(2, (side * 2) // 7)       # 8 on 28x28
    spread = min((side - patch) // 2, 3)
    occlusion = max(2, patch // 3)
    period = 4.0
    drop_max = 0.75
    bright = 0.9
    anchors = _class_anchors(class_count, side, patch, spread)
    yy, xx = np.mgrid[0:patch, 0:patch]

    rng = np.random.default_rng(seed)
    n = class_count * per_class
    images = np.zeros((n, 1, side, side), dtype=np.float32)
    labels = np.repeat(np.arange(class_count, dtype=np.int64), per_class)

    i = 0
    for c in range(class_count):
        angle = math.pi * c / class_count
        anchor_r, anchor_c = anchors[c]
        for _ in range(per_class):
            phase = float(rng.uniform(0.0, period))
            ramp = xx * math.cos(angle) + yy * math.sin(angle) + phase
            stripes = (np.mod(ramp, period) < period / 2).astype(np.float32) * bright
            drop = float(rng.uniform(0.0, drop_max))
            stripes *= rng.random((patch, patch)) >= drop
            occ_r = int(rng.integers(0, patch - occlusion + 1))
            occ_c = int(rng.integers(0, patch - occlusion + 1))
            stripes[occ_r:occ_r + occlusion, occ_c:occ_c + occlusion] = 0.0
            row = int(np.clip(anchor_r + rng.integers(-jitter, jitter + 1), 0, side - patch))
            col = int(np.clip(anchor_c + rng.integers(-jitter, jitter + 1), 0, side - patch))
            img = images[i, 0]
            img[row:row + patch, col:col + patch] = stripes
            img += rng.uniform(0.0, 0.1, size=(side, side)).astype(np.float32)
            i += 1
    return LabeledDataset(images, labels, class_count)
