"""Confusion counts, precision/recall/F1, precision-recall curves and MSE.

Zero-division convention: precision, recall and F1 are 0 whenever their
denominator is 0.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ClassAbsentError, SchemaError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return asdict(self)


def confusion(y_true, y_pred) -> ConfusionCounts:
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    if y_true.shape != y_pred.shape:
        raise SchemaError("label and prediction arrays differ in shape")
    return ConfusionCounts(
        tp=int(np.sum(y_true & y_pred)),
        fp=int(np.sum(~y_true & y_pred)),
        tn=int(np.sum(~y_true & ~y_pred)),
        fn=int(np.sum(y_true & ~y_pred)),
    )


def precision_recall_f1(c: ConfusionCounts) -> tuple[float, float, float]:
    p = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    r = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    # 2tp / (2tp + fp + fn) equals the harmonic mean but rounds once, so equal
    # counts always give equal floats
    f1 = 2 * c.tp / (2 * c.tp + c.fp + c.fn) if c.tp else 0.0
    return p, r, f1


def f1_score(y_true, y_pred) -> float:
    return precision_recall_f1(confusion(y_true, y_pred))[2]


def f1_at(scores, y_true, threshold: float) -> float:
    """F1 of the positive class when rows with ``score >= threshold`` are flagged."""
    return f1_score(y_true, np.asarray(scores) >= threshold)


@dataclass(frozen=True)
class PRCurve:
    thresholds: np.ndarray  # strictly decreasing
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    tp: np.ndarray
    fp: np.ndarray

    def __len__(self) -> int:
        return len(self.thresholds)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "precision", "recall", "f1", "tp", "fp"])
            for row in zip(self.thresholds, self.precision, self.recall, self.f1, self.tp, self.fp):
                w.writerow([repr(float(v)) for v in row[:4]] + [int(row[4]), int(row[5])])


def pr_curve(scores, y_true) -> PRCurve:
    """Precision/recall/F1 at every distinct score used as a ``>=`` cut."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y_true).astype(bool)
    if scores.shape != y.shape:
        raise SchemaError("scores and labels differ in length")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise ClassAbsentError("a precision-recall curve needs both classes")
    order = np.argsort(-scores, kind="stable")
    s, yy = scores[order], y[order]
    tp_cum = np.cumsum(yy)
    fp_cum = np.cumsum(~yy)
    # last position of each run of equal scores
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp, fp = tp_cum[last], fp_cum[last]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    f1 = np.where(tp > 0, 2 * tp / (tp + fp + n_pos), 0.0)
    return PRCurve(s[last], precision, recall, f1, tp, fp)


def mse(y, yhat) -> float:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.size == 0:
        raise SchemaError(f"mse needs equal non-empty inputs, got {y.shape} and {yhat.shape}")
    return float(np.mean((y - yhat) ** 2))
