"""Confusion matrices and support-weighted precision / recall / F-score."""
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, Sequence

import numpy as np

from corpus import Label
from errors import EmptyMatrixError, ShapeError
from linear_models import N_CLASSES, as_codes


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true label, columns = predicted label

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> Dict:
        return {"labels": [label.text for label in Label], "counts": self.counts.tolist()}


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    per_class: Dict[Label, ClassScores]

    def as_percentages(self) -> Dict[str, str]:
        return {
            "accuracy": format_percent(self.accuracy),
            "precision": format_percent(self.weighted_precision),
            "recall": format_percent(self.weighted_recall),
            "f_score": format_percent(self.weighted_f1),
        }

    def to_dict(self) -> Dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.weighted_precision,
            "recall": self.weighted_recall,
            "f_score": self.weighted_f1,
            "per_class": {
                label.text: vars(scores) for label, scores in self.per_class.items()
            },
        }


def confusion(y_true: Sequence, y_pred: Sequence) -> ConfusionMatrix:
    true = as_codes(y_true)
    pred = as_codes(y_pred)
    if len(true) != len(pred) or len(true) == 0:
        raise ShapeError(f"y_true has {len(true)} labels and y_pred {len(pred)} (need equal and > 0)")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts=counts)


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # 0 / 0 is reported as 0.
    out = np.zeros(len(num), dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def weighted_report(cm: ConfusionMatrix) -> MetricsReport:
    """
    Per-class precision, recall and F1, averaged with weights equal to each
    class's share of true samples. Undefined ratios count as 0.
    """
    total = cm.total
    if total == 0:
        raise EmptyMatrixError("confusion matrix is empty; nothing to score")
    counts = cm.counts.astype(np.float64)
    diag = np.diag(counts)
    support = counts.sum(axis=1)
    precision = _safe_ratio(diag, counts.sum(axis=0))
    recall = _safe_ratio(diag, support)
    f1 = _safe_ratio(2.0 * precision * recall, precision + recall)
    share = support / total

    per_class = {
        label: ClassScores(
            precision=float(precision[label]),
            recall=float(recall[label]),
            f1=float(f1[label]),
            support=int(support[label]),
        )
        for label in Label
    }
    return MetricsReport(
        accuracy=float(diag.sum() / total),
        weighted_precision=float(np.dot(share, precision)),
        weighted_recall=float(np.dot(share, recall)),
        weighted_f1=float(np.dot(share, f1)),
        per_class=per_class,
    )


def evaluate(y_true: Sequence, y_pred: Sequence) -> MetricsReport:
    return weighted_report(confusion(y_true, y_pred))


def format_percent(value: float) -> str:
    """0.47590 -> "47.6" (one decimal, halves rounded away from zero)."""
    return str((Decimal(repr(float(value))) * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def majority_label(train_labels: Sequence) -> Label:
    """Most frequent training class, ties to the lowest code."""
    counts = np.bincount(as_codes(train_labels), minlength=N_CLASSES)
    return Label(int(np.argmax(counts)))


def majority_baseline(train_labels: Sequence, n_predictions: int) -> np.ndarray:
    return np.full(n_predictions, int(majority_label(train_labels)), dtype=np.int64)
