"""Stratified train/validation splits and k-fold partitions."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from dscx.errors import InvalidConfig

log = logging.getLogger(__name__)

# Published per-class totals and their train/validation split.
PUBLISHED_TOTALS = (2581, 3523, 1461, 254, 41)
PUBLISHED_TRAIN = (2055, 2819, 1179, 202, 33)
PUBLISHED_VALIDATE = (526, 704, 282, 52, 8)
PUBLISHED_PERCENT = (32.84, 44.83, 18.59, 3.23, 0.52)
NUM_CLASSES = 5


def _labels(items) -> np.ndarray:
    return np.array([getattr(x, "label", x) for x in items], dtype=int)


def published_counts(total: int) -> list[int]:
    """Class counts for ``total`` samples in the published proportions (largest remainder)."""
    shares = np.array(PUBLISHED_TOTALS, dtype=float) / sum(PUBLISHED_TOTALS) * total
    counts = np.floor(shares).astype(int)
    order = np.argsort(-(shares - counts), kind="stable")
    counts[order[: total - counts.sum()]] += 1
    return counts.tolist()


def stratified_split(items: Sequence, train_fraction: float = 0.8, seed: int = 0) -> tuple[list[int], list[int]]:
    """Per-class seeded split; returns sorted (train, validate) index lists.

    Each class keeps round(train_fraction * n) training samples, except that
    class totals equal to the published ones reproduce the published split.
    """
    labels = _labels(items)
    counts = np.bincount(labels, minlength=NUM_CLASSES)
    exact = tuple(counts.tolist()) == PUBLISHED_TOTALS and train_fraction == 0.8
    rng = np.random.default_rng(seed)
    train: list[int] = []
    val: list[int] = []
    for c, n in enumerate(counts):
        if n == 0:
            log.warning("class %d has no samples", c)
            continue
        idx = rng.permutation(np.flatnonzero(labels == c))
        k = PUBLISHED_TRAIN[c] if exact else int(np.floor(train_fraction * n + 0.5))
        if n < 5:
            log.warning("class %d has only %d samples", c, n)
        train.extend(idx[:k].tolist())
        val.extend(idx[k:].tolist())
    return sorted(train), sorted(val)


def kfold(items: Sequence, k: int = 5, seed: int = 0) -> list[tuple[list[int], list[int]]]:
    """Stratified k-fold: each class is shuffled and dealt round-robin to folds.

    The dealing position carries over from class to class so fold sizes also
    stay within one sample of each other.
    """
    if k < 2:
        raise InvalidConfig(f"k-fold needs k >= 2, got {k}")
    labels = _labels(items)
    if len(labels) < k:
        raise InvalidConfig(f"{len(labels)} samples cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=int)
    offset = 0
    for c in range(max(NUM_CLASSES, labels.max(initial=0) + 1)):
        idx = rng.permutation(np.flatnonzero(labels == c))
        if 0 < len(idx) < k:
            log.warning("class %d has %d samples, fewer than %d folds", c, len(idx), k)
        fold_of[idx] = (offset + np.arange(len(idx))) % k
        offset += len(idx)
    everything = np.arange(len(labels))
    return [(everything[fold_of != f].tolist(), everything[fold_of == f].tolist()) for f in range(k)]
