"""Binary classification metrics: accuracy, F1 on the positive class, ROC-AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    f1: float
    auc: float
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "auc": self.auc,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
        }


def accuracy_f1(pred, truth):
    """(accuracy, f1, (tp, fp, tn, fn)) with label 1 as the positive class;
    F1 is 0 when precision + recall is 0."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError(f"shape mismatch or empty: {pred.shape} vs {truth.shape}")
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    tn = int(np.sum((pred == 0) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    accuracy = (tp + tn) / pred.size
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom > 0 else 0.0
    return accuracy, f1, (tp, fp, tn, fn)


def auc(scores, truth) -> float:
    """Rank-based ROC area: fraction of (positive, negative) pairs ranked
    correctly, ties counted half. Equals the trapezoidal area under the ROC
    curve."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    if scores.shape != truth.shape:
        raise ValueError("scores and truth must have equal length")
    pos = truth == 1
    n_pos = int(pos.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def compute_metrics(pred, scores, truth) -> MetricsReport:
    accuracy, f1, (tp, fp, tn, fn) = accuracy_f1(pred, truth)
    return MetricsReport(
        accuracy=accuracy, f1=f1, auc=auc(scores, truth), tp=tp, fp=fp, tn=tn, fn=fn
    )
