"""Confusion matrix, threshold metrics, ROC/AUROC, and whole-model reports.

All metric math runs at float64 whatever the model precision. Degenerate
cells (zero denominators) report None rather than 0 or NaN so single-class
slices stay honest; the JSON report encodes None as null.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import network
from .data import ImageRecord, LabelRow
from .errors import EvaluationError, SingleClassError


@dataclass(frozen=True)
class ConfusionMatrix:
    """TN/FP/FN/TP counts at one decision threshold."""

    tn: int
    fp: int
    fn: int
    tp: int

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    @property
    def n_healthy(self) -> int:
        return self.tn + self.fp

    @property
    def n_diseased(self) -> int:
        return self.fn + self.tp


@dataclass(frozen=True)
class Metrics:
    """Threshold metrics; None marks a cell with a zero denominator."""

    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    specificity: Optional[float]
    f1: Optional[float]


@dataclass(frozen=True)
class RocCurve:
    """(fpr, tpr) points from the threshold sweep, endpoints included."""

    points: tuple


@dataclass(frozen=True)
class EvalReport:
    """Everything the evaluation stage knows about one data part."""

    n: int
    n_healthy: int
    n_diseased: int
    threshold: float
    confusion: ConfusionMatrix
    metrics: Metrics
    auroc: Optional[float]
    roc: Optional[RocCurve]

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "n_healthy": self.n_healthy,
            "n_diseased": self.n_diseased,
            "threshold": self.threshold,
            "confusion": {
                "tn": self.confusion.tn,
                "fp": self.confusion.fp,
                "fn": self.confusion.fn,
                "tp": self.confusion.tp,
            },
            "metrics": {
                "accuracy": self.metrics.accuracy,
                "precision": self.metrics.precision,
                "recall": self.metrics.recall,
                "specificity": self.metrics.specificity,
                "f1": self.metrics.f1,
                "auroc": self.auroc,
            },
            "roc": [[fpr, tpr] for fpr, tpr in self.roc.points] if self.roc else None,
        }


def _validate_scores_labels(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or y.ndim != 1:
        raise EvaluationError("scores and labels must be one-dimensional")
    if s.shape[0] != y.shape[0]:
        raise EvaluationError(f"length mismatch: {s.shape[0]} scores vs {y.shape[0]} labels")
    if s.shape[0] == 0:
        raise EvaluationError("empty input")
    if not np.isin(y, (0, 1)).all():
        raise EvaluationError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def confusion(scores: Sequence[float], labels: Sequence[int], threshold: float) -> ConfusionMatrix:
    """Counts with the tie rule: score >= threshold predicts diseased."""
    s, y = _validate_scores_labels(scores, labels)
    pred = s >= threshold
    return ConfusionMatrix(
        tn=int(((y == 0) & ~pred).sum()),
        fp=int(((y == 0) & pred).sum()),
        fn=int(((y == 1) & ~pred).sum()),
        tp=int(((y == 1) & pred).sum()),
    )


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Accuracy, precision, recall, specificity, F1 from one confusion matrix."""
    if cm.total == 0:
        raise EvaluationError("confusion matrix is empty")
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return Metrics(
        accuracy=(cm.tp + cm.tn) / cm.total,
        precision=precision,
        recall=recall,
        specificity=_ratio(cm.tn, cm.tn + cm.fp),
        f1=f1,
    )


def roc_auroc(scores: Sequence[float], labels: Sequence[int]):
    """ROC sweep over distinct score thresholds plus trapezoidal AUROC.

    Tied scores share one threshold step, which makes the trapezoidal area
    equal the Mann-Whitney statistic with ties counted 1/2, exactly: the
    area numerator is accumulated in integers and divided once at the end.
    """
    s, y = _validate_scores_labels(scores, labels)
    n_pos = int(y.sum())
    n_neg = int(y.shape[0] - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError(
            f"ROC needs both classes, got {n_pos} diseased / {n_neg} healthy"
        )
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]

    points = [(0.0, 0.0)]
    tp = fp = 0
    prev_tp = prev_fp = 0
    area2 = 0  # twice the area, integer-exact
    i = 0
    n = s_sorted.shape[0]
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        pos_here = int(y_sorted[i:j].sum())
        tp += pos_here
        fp += (j - i) - pos_here
        area2 += (fp - prev_fp) * (tp + prev_tp)
        points.append((fp / n_neg, tp / n_pos))
        prev_tp, prev_fp = tp, fp
        i = j
    auroc = area2 / (2 * n_pos * n_neg)
    return RocCurve(points=tuple(points)), auroc


def scores_for_records(weights: network.ModelWeights, records: Sequence[ImageRecord],
                       batch_size: int = 32):
    """Deterministic per-image scores and labels, no augmentation."""
    records = list(records)
    if not records:
        raise EvaluationError("cannot evaluate an empty data part")
    scores = np.empty(len(records), dtype=np.float64)
    labels = np.empty(len(records), dtype=np.int64)
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        images = np.stack([rec.pixels for rec in chunk])
        scores[start:start + len(chunk)] = network.forward_batch(weights, images)
        labels[start:start + len(chunk)] = [rec.label for rec in chunk]
    return scores, labels


def evaluate_model(weights: network.ModelWeights, records: Sequence[ImageRecord],
                   threshold: float = network.DEFAULT_THRESHOLD,
                   batch_size: int = 32) -> EvalReport:
    """Score every image, then confusion/metrics/ROC at the given threshold.

    On a single-class part the ROC is undefined; the report carries
    auroc=None and roc=None while the threshold metrics stay present.
    """
    scores, labels = scores_for_records(weights, records, batch_size=batch_size)
    cm = confusion(scores, labels, threshold)
    mets = metrics(cm)
    try:
        roc, auroc = roc_auroc(scores, labels)
    except SingleClassError:
        roc, auroc = None, None
    return EvalReport(
        n=cm.total,
        n_healthy=cm.n_healthy,
        n_diseased=cm.n_diseased,
        threshold=threshold,
        confusion=cm,
        metrics=mets,
        auroc=auroc,
        roc=roc,
    )


def dataset_stats(rows: Sequence[LabelRow]) -> list:
    """Per-disease counts, sorted by count descending (stable on ties)."""
    if not rows:
        return []
    columns = list(rows[0].flags.keys())
    counts = {col: 0 for col in columns}
    for row in rows:
        for col, flag in row.flags.items():
            if col not in counts:
                counts[col] = 0
            counts[col] += flag
    order = {col: i for i, col in enumerate(counts)}
    return sorted(counts.items(), key=lambda item: (-item[1], order[item[0]]))
