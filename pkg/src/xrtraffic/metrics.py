"""Confusion matrix and one-vs-rest per-class metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyMatrix, LabelOutOfRange, LengthMismatch


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """``counts[t-1, p-1]`` = items of true class t predicted as p (ids start at 1)."""

    counts: np.ndarray
    class_names: tuple = ()

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def name(self, class_id: int) -> str:
        if self.class_names and class_id - 1 < len(self.class_names):
            return self.class_names[class_id - 1]
        return str(class_id)

    def one_vs_rest(self, class_id: int) -> tuple[int, int, int, int]:
        """(TP, TN, FP, FN) treating ``class_id`` as the positive class."""
        k = class_id - 1
        m = self.counts
        tp = int(m[k, k])
        fn = int(m[k, :].sum()) - tp
        fp = int(m[:, k].sum()) - tp
        tn = self.total - tp - fn - fp
        return tp, tn, fp, fn

    def overall_accuracy(self) -> float:
        if self.total == 0:
            raise EmptyMatrix("no evaluated items")
        return float(np.trace(self.counts)) / self.total


def confusion(y_true: Sequence[int], y_pred: Sequence[int], n_classes: int,
              class_names: Sequence[str] = ()) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 1 or arr.max() > n_classes):
            raise LabelOutOfRange(f"labels must lie in 1..{n_classes}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true - 1, y_pred - 1), 1)
    return ConfusionMatrix(counts, tuple(class_names))


@dataclass(frozen=True)
class ClassMetrics:
    class_id: int
    support: int
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    recall: float
    precision: float
    f1: float
    fnr: float
    degenerate: tuple = ()  # names of metrics whose denominator was zero


def _ratio(num, den, name, degenerate):
    if den == 0:
        degenerate.append(name)
        return 0.0
    return num / den


def per_class_metrics(m: ConfusionMatrix) -> dict[int, ClassMetrics]:
    if m.total == 0:
        raise EmptyMatrix("no evaluated items")
    out = {}
    for cid in range(1, m.n_classes + 1):
        tp, tn, fp, fn = m.one_vs_rest(cid)
        degenerate = []
        accuracy = (tp + tn) / (tp + tn + fp + fn)
        recall = _ratio(tp, tp + fn, "recall", degenerate)
        precision = _ratio(tp, tp + fp, "precision", degenerate)
        f1 = _ratio(2 * precision * recall, precision + recall, "f1", degenerate)
        fnr = _ratio(fn, tp + fn, "fnr", degenerate)
        out[cid] = ClassMetrics(cid, tp + fn, tp, tn, fp, fn, accuracy, recall,
                                precision, f1, fnr, tuple(degenerate))
    return out


def metrics_table(m: ConfusionMatrix, classes: Optional[Sequence[int]] = None) -> list[dict]:
    """Rows of class, test-segment count, accuracy %, FNR (plus the rest)."""
    per = per_class_metrics(m)
    rows = []
    for cid in classes if classes is not None else sorted(per):
        r = per[cid]
        rows.append({
            "class_id": cid,
            "class": m.name(cid),
            "test_segments": r.support,
            "accuracy_pct": 100.0 * r.accuracy,
            "fnr": r.fnr,
            "recall": r.recall,
            "precision": r.precision,
            "f1": r.f1,
        })
    return rows
