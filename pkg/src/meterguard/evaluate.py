"""Scoring verdict streams against ground-truth labels.

An invalid verdict at a forged position is a true positive; positions with
no verdict (per-bucket warm-up) are excluded from scoring and reported
separately so both denominators stay visible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import MeterGuardError


class AlignmentError(MeterGuardError):
    """Verdicts and labels could not be paired one-to-one by position."""


class EmptyMatrixError(MeterGuardError):
    """Metrics requested for a matrix with no scored verdicts."""


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion matrix counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def score(verdicts: Sequence, labels: Sequence) -> ConfusionMatrix:
    """Position-wise confusion counts.

    verdicts[i] is the Verdict for position i or None during warm-up;
    labels[i] is True when the position was forged. Invalid = flagged as
    theft. None verdicts are excluded from the matrix.
    """
    if len(verdicts) != len(labels):
        raise AlignmentError(
            f"{len(verdicts)} verdicts cannot pair with {len(labels)} labels"
        )
    tp = tn = fp = fn = 0
    for verdict, forged in zip(verdicts, labels):
        if verdict is None:
            continue
        flagged = not verdict.valid
        if forged:
            if flagged:
                tp += 1
            else:
                fn += 1
        else:
            if flagged:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


@dataclass(frozen=True)
class MetricsReport:
    """Accuracy / TPR / FPR / precision / recall / F1 plus the raw counts.

    Ratios with a zero denominator are reported as 0.0 and named in
    `degenerate`. `excluded` counts warm-up positions left out of scoring.
    """

    accuracy: float
    tpr: float
    fpr: float
    precision: float
    recall: float
    f1: float
    matrix: ConfusionMatrix
    excluded: int = 0
    degenerate: tuple = ()

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "tpr": self.tpr,
            "fpr": self.fpr,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "counts": {
                "tp": self.matrix.tp,
                "tn": self.matrix.tn,
                "fp": self.matrix.fp,
                "fn": self.matrix.fn,
                "scored": self.matrix.total,
                "excluded_warmup": self.excluded,
            },
            "degenerate_denominators": list(self.degenerate),
        }


def metrics(matrix: ConfusionMatrix, excluded: int = 0) -> MetricsReport:
    """Apply the four rate formulas to a confusion matrix.

    accuracy = (TP+TN)/total, TPR = recall = TP/(TP+FN), FPR = FP/(FP+TN),
    precision = TP/(TP+FP), F1 = harmonic mean of precision and recall.
    """
    if matrix.total == 0:
        raise EmptyMatrixError("no scored verdicts to evaluate")
    degenerate = []

    def ratio(name: str, num: int, den: int) -> float:
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    accuracy = (matrix.tp + matrix.tn) / matrix.total
    tpr = ratio("tpr", matrix.tp, matrix.tp + matrix.fn)
    fpr = ratio("fpr", matrix.fp, matrix.fp + matrix.tn)
    precision = ratio("precision", matrix.tp, matrix.tp + matrix.fp)
    recall = tpr
    if precision + recall == 0.0:
        degenerate.append("f1")
        f1 = 0.0
    else:
        f1 = 2.0 * (precision * recall) / (precision + recall)
    return MetricsReport(
        accuracy=accuracy,
        tpr=tpr,
        fpr=fpr,
        precision=precision,
        recall=recall,
        f1=f1,
        matrix=matrix,
        excluded=excluded,
        degenerate=tuple(degenerate),
    )
