"""Confusion matrices and per-class accuracy.

Orientation: rows are the predicted class and columns the true class, so
a column sums to the number of validation samples of that class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dscx.errors import ShapeMismatch

NUM_CLASSES = 5

# Published validation confusion matrix (rows predicted, columns true).
PUBLISHED_CONFUSION = (
    (482, 24, 5, 0, 1),
    (30, 659, 28, 9, 1),
    (11, 21, 245, 1, 0),
    (3, 0, 4, 42, 0),
    (0, 0, 0, 0, 6),
)


class EmptyColumn(UserWarning):
    """A class has no true samples; its accuracy is undefined."""


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ShapeMismatch(f"confusion matrix must be square, got {c.shape}")
        if np.any(c < 0) or np.any(c != np.round(c)):
            raise ValueError("confusion counts must be non-negative integers")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @classmethod
    def from_predictions(cls, true: Sequence[int], predicted: Sequence[int], classes: int = NUM_CLASSES):
        counts = np.zeros((classes, classes), dtype=np.int64)
        for t, p in zip(true, predicted, strict=True):
            counts[p, t] += 1
        return cls(counts)

    @property
    def column_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return ConfusionMatrix(self.counts + other.counts)


@dataclass(frozen=True)
class AccuracyReport:
    per_class: tuple  # fraction per class, None where the column is empty
    overall: float

    def to_json(self, cm: ConfusionMatrix) -> str:
        payload = {
            "per_class_accuracy": list(self.per_class),
            "overall_accuracy": self.overall,
            "confusion": cm.counts.tolist(),
        }
        return json.dumps(payload, indent=2) + "\n"


def accuracy_report(cm: ConfusionMatrix) -> AccuracyReport:
    counts = cm.counts
    cols = counts.sum(axis=0)
    if not cols.any():
        raise ValueError("confusion matrix has no samples")
    diag = np.diag(counts)
    per_class = tuple(float(d / n) if n else None for d, n in zip(diag, cols))
    return AccuracyReport(per_class, float(diag.sum() / cols.sum()))


def read_metrics(text: str) -> tuple[ConfusionMatrix, AccuracyReport]:
    obj = json.loads(text)
    cm = ConfusionMatrix(np.array(obj["confusion"]))
    return cm, AccuracyReport(tuple(obj["per_class_accuracy"]), obj["overall_accuracy"])


def format_table(cm: ConfusionMatrix, report: AccuracyReport | None = None) -> str:
    """Plain-text grid in the published layout: true classes across, an Acc (%) row below."""
    report = report or accuracy_report(cm)
    k = cm.counts.shape[0]
    width = max(7, len(str(cm.counts.max())) + 2)
    head = "pred\\true".ljust(10) + "".join(f"{j:>{width}}" for j in range(k))
    rows = [head]
    for i in range(k):
        rows.append(f"{i:<10}" + "".join(f"{v:>{width}}" for v in cm.counts[i]))
    rows.append("total".ljust(10) + "".join(f"{v:>{width}}" for v in cm.column_sums))
    accs = ["-" if a is None else f"{100 * a:.2f}" for a in report.per_class]
    rows.append("Acc (%)".ljust(10) + "".join(f"{a:>{width}}" for a in accs))
    rows.append(f"overall accuracy: {100 * report.overall:.2f}%")
    return "\n".join(rows) + "\n"
