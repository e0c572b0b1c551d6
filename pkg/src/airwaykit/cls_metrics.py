"""Binary-classification metrics for mortality prediction (1 = alive)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyInput, SingleClassInput

DEFAULT_WEIGHTS = (0.2, 0.2, 0.2, 0.2, 0.2)  # acc, auc, sensitivity, specificity, f1


@dataclass(frozen=True)
class PredictionSet:
    case_ids: tuple[str, ...]
    probs: np.ndarray
    labels: np.ndarray
    threshold: float = 0.5

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.case_ids) != len(probs) or len(probs) != len(labels):
            raise ValueError("case_ids, probs and labels must have equal length")
        if len(set(self.case_ids)) != len(self.case_ids):
            raise ValueError("case_ids must be unique")
        if probs.size and (probs.min() < 0 or probs.max() > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 (deceased) or 1 (alive)")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_rows(cls, rows, threshold: float = 0.5) -> "PredictionSet":
        ids, probs, labels = zip(*rows) if rows else ((), (), ())
        return cls(tuple(str(i) for i in ids), np.array(probs, dtype=float),
                   np.array(labels, dtype=int), threshold)

    @classmethod
    def from_csv(cls, path: str | Path, threshold: float = 0.5) -> "PredictionSet":
        rows = []
        with open(path, newline="") as fh:
            for record in csv.DictReader(fh):
                rows.append((record["case_id"], float(record["prob"]), int(record["label"])))
        return cls.from_rows(rows, threshold)


@dataclass(frozen=True)
class ClsReport:
    acc: float
    sensitivity: float
    specificity: float
    f1: float
    auc: float
    overall: float


def _check_both_classes(labels: np.ndarray) -> None:
    if labels.size == 0:
        raise EmptyInput("no samples")
    if labels.min() == labels.max():
        raise SingleClassInput("both classes are required")


def concordance_auc(probs: np.ndarray, labels: np.ndarray) -> float:
    """P(score of a positive > score of a negative), ties counting one half."""
    _check_both_classes(labels)
    ranks = rankdata(probs)  # average ranks make tied pairs contribute 1/2
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def classification_report(preds: PredictionSet,
                          weights: tuple[float, ...] = DEFAULT_WEIGHTS) -> ClsReport:
    """Accuracy, sensitivity/specificity, F1, AUC and their weighted composite.

    ``weights`` applies to (acc, auc, sensitivity, specificity, f1) and must
    be non-negative summing to 1. The positive class is 1 (alive).
    """
    _check_both_classes(preds.labels)
    w = np.asarray(weights, dtype=float)
    if w.shape != (5,) or (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be 5 non-negative values summing to 1")

    predicted = (preds.probs >= preds.threshold).astype(np.int64)
    labels = preds.labels
    tp = int(np.count_nonzero((predicted == 1) & (labels == 1)))
    tn = int(np.count_nonzero((predicted == 0) & (labels == 0)))
    fp = int(np.count_nonzero((predicted == 1) & (labels == 0)))
    fn = int(np.count_nonzero((predicted == 0) & (labels == 1)))

    acc = (tp + tn) / labels.size
    sensitivity = tp / (tp + fn)
    specificity = tn / (tn + fp)
    precision = tp / (tp + fp) if tp + fp else 0.0
    f1 = (2 * precision * sensitivity / (precision + sensitivity)
          if precision + sensitivity else 0.0)
    auc = concordance_auc(preds.probs, labels)
    overall = float(np.dot(w, [acc, auc, sensitivity, specificity, f1]))
    return ClsReport(acc=acc, sensitivity=sensitivity, specificity=specificity,
                     f1=f1, auc=auc, overall=overall)


def roc_curve(preds: PredictionSet) -> list[tuple[float, float]]:
    """ROC staircase from (0,0) to (1,1); one point per distinct score.

    The trapezoidal area under the returned points equals the pairwise
    concordance AUC (ties handled identically).
    """
    _check_both_classes(preds.labels)
    order = np.argsort(-preds.probs, kind="stable")
    probs = preds.probs[order]
    labels = preds.labels[order]
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos

    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < labels.size:
        j = i
        while j < labels.size and probs[j] == probs[i]:
            j += 1
        tp += int(labels[i:j].sum())
        fp += (j - i) - int(labels[i:j].sum())
        points.append((fp / n_neg, tp / n_pos))
        i = j
    return points


def roc_auc(points: list[tuple[float, float]]) -> float:
    """Trapezoidal area under an ROC staircase."""
    pts = np.asarray(points)
    return float(np.trapezoid(pts[:, 1], pts[:, 0]))


def write_roc_csv(points: list[tuple[float, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for fpr, tpr in points:
            writer.writerow([repr(fpr), repr(tpr)])
