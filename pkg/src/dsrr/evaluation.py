"""Confusion matrices and precision / recall / F1 / accuracy reports."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InputError

__all__ = ["ConfusionMatrix", "ClassMetrics", "MetricsReport", "confusion", "metrics", "CSV_COLUMNS"]

CSV_COLUMNS = ("method", "w", "a", "Pr", "Rc", "F1", "Acc")


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[i, j]`` = rows with true label ``labels[i]`` predicted as ``labels[j]``."""

    labels: tuple
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def get(self, true_label, predicted_label) -> int:
        return int(self.counts[self.labels.index(true_label), self.labels.index(predicted_label)])


def confusion(true_labels: Sequence, predicted_labels: Sequence, labels: Optional[Sequence] = None) -> ConfusionMatrix:
    """Count (true, predicted) pairs; label order is lexicographic unless given."""
    t = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    if t.shape[0] != p.shape[0]:
        raise InputError(f"length mismatch: {t.shape[0]} truths vs {p.shape[0]} predictions")
    if t.shape[0] == 0:
        raise InputError("cannot build a confusion matrix from empty input")
    order = np.unique(np.concatenate([t, p])) if labels is None else np.asarray(labels)
    index = {lab: i for i, lab in enumerate(order.tolist())}
    counts = np.zeros((len(index), len(index)), dtype=np.int64)
    try:
        np.add.at(counts, ([index[v] for v in t.tolist()], [index[v] for v in p.tolist()]), 1)
    except KeyError as exc:
        raise InputError(f"label {exc.args[0]!r} not in label list") from exc
    return ConfusionMatrix(labels=tuple(index), counts=counts)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsReport:
    per_class: dict
    precision: float
    recall: float
    f1: float
    accuracy: float
    support: int
    # metric cells whose denominator was zero and were reported as 0
    zero_division: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "Pr": self.precision,
            "Rc": self.recall,
            "F1": self.f1,
            "Acc": self.accuracy,
            "support": self.support,
            "per_class": {
                str(c): {"Pr": m.precision, "Rc": m.recall, "F1": m.f1, "support": m.support}
                for c, m in self.per_class.items()
            },
            "zero_division": list(self.zero_division),
        }

    def csv_row(self, method: str, w: Optional[int] = None, a: Optional[int] = None) -> str:
        buf = io.StringIO()
        fmt = lambda v: format(v, ".17g")  # noqa: E731
        csv.writer(buf, lineterminator="\n").writerow(
            [method, "" if w is None else w, "" if a is None else a,
             fmt(self.precision), fmt(self.recall), fmt(self.f1), fmt(self.accuracy)]
        )
        return buf.getvalue()


def _ratio(num: float, den: float, tag: str, flags: list) -> float:
    if den == 0:
        flags.append(tag)
        return 0.0
    return num / den


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Per-class and support-weighted precision, recall and F1, plus accuracy."""
    counts = cm.counts.astype(float)
    tp = np.diag(counts)
    support = counts.sum(axis=1)
    predicted = counts.sum(axis=0)
    total = counts.sum()
    flags: list = []
    per_class = {}
    for i, lab in enumerate(cm.labels):
        pr = _ratio(tp[i], predicted[i], f"precision:{lab}", flags)
        rc = _ratio(tp[i], support[i], f"recall:{lab}", flags)
        f1 = _ratio(2 * pr * rc, pr + rc, f"f1:{lab}", flags)
        per_class[lab] = ClassMetrics(precision=pr, recall=rc, f1=f1, support=int(support[i]))

    weights = support / total if total else np.zeros_like(support)
    weighted = lambda attr: float(sum(w * getattr(m, attr) for w, m in zip(weights, per_class.values())))  # noqa: E731
    return MetricsReport(
        per_class=per_class,
        precision=weighted("precision"),
        recall=weighted("recall"),
        f1=weighted("f1"),
        accuracy=float(tp.sum() / total) if total else 0.0,
        support=int(total),
        zero_division=flags,
    )
