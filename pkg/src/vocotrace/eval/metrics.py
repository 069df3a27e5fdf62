"""Confusion matrices, precision/recall/F1 and silhouette scores."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import LabelError, ShapeError


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, cols = predicted
    classes: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.classes), len(self.classes)):
            raise ShapeError(f"counts {counts.shape} do not match {len(self.classes)} classes")
        if (counts < 0).any():
            raise ValueError("negative counts")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsReport:
    classes: tuple[str, ...]
    per_class: dict[str, ClassMetrics]
    macro: ClassMetrics
    # class names whose precision, recall or F1 hit a 0/0 and were set to 0
    undefined: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def cm(m):
            return {"precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}
        return {
            "classes": list(self.classes),
            "per_class": {k: cm(v) for k, v in self.per_class.items()},
            "macro": cm(self.macro),
            "undefined": list(self.undefined),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        def cm(m):
            return ClassMetrics(float(m["precision"]), float(m["recall"]), float(m["f1"]), int(m["support"]))
        return cls(tuple(d["classes"]), {k: cm(v) for k, v in d["per_class"].items()}, cm(d["macro"]),
                   list(d.get("undefined", [])))


def confusion(y_true, y_pred, classes) -> ConfusionMatrix:
    classes = tuple(classes)
    y_true, y_pred = list(y_true), list(y_pred)
    if len(y_true) != len(y_pred):
        raise ShapeError(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        if t not in index or p not in index:
            raise LabelError(f"label {t if t not in index else p!r} not in {classes}")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(counts, classes)


def _ratio(num: float, den: float) -> tuple[float, bool]:
    return (num / den, False) if den > 0 else (0.0, True)


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total <= 0:
        raise ValueError("empty confusion matrix")
    c = cm.counts
    per, undefined = {}, []
    for i, name in enumerate(cm.classes):
        tp = float(c[i, i])
        prec, u1 = _ratio(tp, float(c[:, i].sum()))
        rec, u2 = _ratio(tp, float(c[i, :].sum()))
        f1, u3 = _ratio(2.0 * prec * rec, prec + rec)
        if u1 or u2 or u3:
            undefined.append(name)
        per[name] = ClassMetrics(prec, rec, f1, int(c[i, :].sum()))
    vals = list(per.values())
    macro = ClassMetrics(float(np.mean([m.precision for m in vals])), float(np.mean([m.recall for m in vals])),
                         float(np.mean([m.f1 for m in vals])), cm.total)
    return MetricsReport(cm.classes, per, macro, undefined)


def macro_f1(y_true, y_pred, classes) -> float:
    return metrics(confusion(y_true, y_pred, classes)).macro.f1


def silhouette(X: np.ndarray, labels) -> float:
    """Mean silhouette coefficient with Euclidean distance.

    Points in singleton clusters score 0, as is conventional.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2 or len(uniq) >= len(X):
        raise ValueError("silhouette needs 2 <= n_clusters < n_samples")
    sq = np.sum(X * X, axis=1)
    D = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0))
    np.fill_diagonal(D, 0.0)
    masks = [labels == u for u in uniq]
    s = np.zeros(len(X))
    for k, mk in enumerate(masks):
        n_k = mk.sum()
        if n_k == 1:
            continue
        a = D[np.ix_(mk, mk)].sum(axis=1) / (n_k - 1)
        b = np.min([D[np.ix_(mk, m)].mean(axis=1) for j, m in enumerate(masks) if j != k], axis=0)
        s[mk] = (b - a) / np.maximum(a, b)
    return float(s.mean())
