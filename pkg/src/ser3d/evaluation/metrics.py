"""Confusion matrices, unweighted accuracy and row percentages."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError


@dataclass
class FoldResult:
    fold_index: int
    ua: float
    confusion: np.ndarray
    predictions: dict = field(default_factory=dict)  # utterance id -> predicted class

    def __post_init__(self):
        if not 0.0 <= self.ua <= 1.0:
            raise ValueError(f"UA must lie in [0, 1], got {self.ua}")


def confusion_matrix(y_true, y_pred, n_classes: int = 4) -> np.ndarray:
    """Counts with rows = true class and columns = predicted class."""
    y_true, y_pred = np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape:
        raise DataError(f"{y_true.size} labels vs {y_pred.size} predictions")
    for name, y in (("label", y_true), ("prediction", y_pred)):
        if y.size and (y.min() < 0 or y.max() >= n_classes):
            raise DataError(f"{name} outside 0..{n_classes - 1}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def unweighted_accuracy(cm: np.ndarray) -> float:
    """Mean per-class recall; classes with no true examples are left out with a warning."""
    cm = np.asarray(cm)
    totals = cm.sum(axis=1)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or totals.sum() == 0:
        raise DataError("unweighted_accuracy needs a non-empty square confusion matrix")
    present = totals > 0
    if not present.all():
        warnings.warn(f"classes {np.flatnonzero(~present).tolist()} have no test examples and "
                      "are excluded from UA", stacklevel=2)
    return float(np.mean(np.diag(cm)[present] / totals[present]))


def row_percent(cm: np.ndarray) -> list:
    """Integer row percentages summing to exactly 100 (largest remainder).

    Empty rows come back as ``None``.  Equal remainders favour the lower
    column index.
    """
    rows = []
    for row in np.asarray(cm, dtype=np.int64):
        total = int(row.sum())
        if total == 0:
            rows.append(None)
            continue
        exact = row * 100 / total
        base = np.floor(exact).astype(int)
        # counts are integers, so compare remainders exactly via row*100 mod total
        rema = (row * 100) % total
        order = sorted(range(row.size), key=lambda j: (-rema[j], j))
        for j in order[:100 - int(base.sum())]:
            base[j] += 1
        rows.append(base.tolist())
    return rows
