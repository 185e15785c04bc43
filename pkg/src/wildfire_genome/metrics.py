"""Ordinal classification metrics for four-level risk classes."""

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateMarginals, LabelOutOfRange, LengthMismatch

N_CLASSES = 4


def _labels(y, n_classes):
    y = np.asarray(y)
    if y.size and (not np.all(y == np.round(y)) or y.min() < 0 or y.max() >= n_classes):
        raise LabelOutOfRange(f"labels must be integers in [0, {n_classes})")
    return y.astype(np.int64).ravel()


def confusion_matrix(y_true, y_pred, n_classes=N_CLASSES):
    """Counts with rows = true class, columns = predicted class."""
    y_true = _labels(y_true, n_classes)
    y_pred = _labels(y_pred, n_classes)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def row_normalize(confusion):
    cm = np.asarray(confusion, dtype=np.float64)
    totals = cm.sum(axis=1, keepdims=True)
    return np.divide(cm, totals, out=np.zeros_like(cm), where=totals > 0)


def accuracy(confusion):
    cm = np.asarray(confusion)
    total = cm.sum()
    return float(np.trace(cm) / total) if total else 0.0


def macro_f1(confusion):
    """Unweighted mean of per-class F1.

    A class with no true and no predicted members scores 0 (with a warning).
    """
    cm = np.asarray(confusion, dtype=np.float64)
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    denom = support + predicted
    absent = denom == 0
    if np.any(absent):
        warnings.warn(f"classes {np.flatnonzero(absent).tolist()} absent from both y_true and "
                      "y_pred; their F1 counts as 0", stacklevel=2)
    # F1 = 2PR/(P+R) = 2TP/(support + predicted)
    f1 = np.divide(2.0 * tp, denom, out=np.zeros_like(tp), where=~absent)
    return float(f1.mean())


def balanced_accuracy(confusion):
    """Mean recall over the classes present in y_true."""
    cm = np.asarray(confusion, dtype=np.float64)
    support = cm.sum(axis=1)
    present = support > 0
    if not np.any(present):
        return 0.0
    return float(np.mean(np.diag(cm)[present] / support[present]))


def qwk_from_confusion(confusion):
    cm = np.asarray(confusion, dtype=np.float64)
    K = cm.shape[0]
    total = cm.sum()
    if total == 0:
        raise DegenerateMarginals("no samples")
    i, j = np.indices((K, K))
    weights = (i - j) ** 2 / (K - 1) ** 2
    observed = cm / total
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0))
    den = float(np.sum(weights * expected))
    if den == 0.0:
        raise DegenerateMarginals("expected disagreement is zero (constant, identical labelings)")
    return 1.0 - float(np.sum(weights * observed)) / den


def qwk(y_true, y_pred, n_classes=N_CLASSES):
    """Quadratic weighted kappa with the Cohen marginal model."""
    return qwk_from_confusion(confusion_matrix(y_true, y_pred, n_classes))


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    balanced_accuracy: float
    qwk: float
    confusion: np.ndarray
    confusion_row_norm: np.ndarray

    @classmethod
    def from_labels(cls, y_true, y_pred, n_classes=N_CLASSES):
        cm = confusion_matrix(y_true, y_pred, n_classes)
        try:
            kappa = qwk_from_confusion(cm)
        except DegenerateMarginals:
            kappa = float("nan")
        return cls(accuracy(cm), macro_f1(cm), balanced_accuracy(cm), kappa, cm, row_normalize(cm))

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "balanced_accuracy": self.balanced_accuracy,
            "qwk": None if np.isnan(self.qwk) else self.qwk,
            "confusion": self.confusion.tolist(),
            "confusion_row_norm": self.confusion_row_norm.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def write_confusion_csv(confusion, path, class_names=None):
    cm = np.asarray(confusion)
    names = class_names or [str(c) for c in range(cm.shape[0])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["true\\pred", *names])
        for name, row in zip(names, cm.tolist()):
            writer.writerow([name, *[repr(v) for v in row]])
