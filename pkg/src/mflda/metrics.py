"""Classification and feature-selection metrics.

Binary metrics treat the second class as positive.  Multi-class precision,
recall and F-1 are one-vs-rest per class, averaged with weights equal to
true-class prevalence (or unweighted with ``average="macro"``); the
multi-class MCC is Gorodkin's R_K statistic.  Any ratio with a zero
denominator is set to 0 and its name is recorded in ``flags``.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .fd_model import fmt

METRIC_NAMES = ("accuracy", "balanced_accuracy", "f1", "precision", "recall", "mcc")


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return float(num) / float(den)


def _mcc(num, den, C, flags):
    """MCC with 0/0 -> 0, except that perfect agreement on a single class scores 1."""
    C = np.asarray(C)
    if den == 0 and C.sum() > 0 and not np.any(C - np.diag(np.diag(C))):
        flags.append("mcc")
        return 1.0
    return _ratio(num, den, "mcc", flags)


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[k, l]`` = number of subjects of true class k predicted as l."""

    counts: np.ndarray
    classes: tuple = ()

    def __post_init__(self):
        C = np.asarray(self.counts)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(C < 0):
            raise ValueError("confusion counts must be nonnegative")
        object.__setattr__(self, "counts", C)
        if not self.classes:
            object.__setattr__(self, "classes", tuple(range(1, C.shape[0] + 1)))
        elif len(self.classes) != C.shape[0]:
            raise ValueError("one class label per row is required")

    @classmethod
    def from_labels(cls, true, predicted, classes=None) -> "ConfusionMatrix":
        true = np.asarray(true)
        predicted = np.asarray(predicted)
        if true.shape != predicted.shape:
            raise ValueError("true and predicted labels differ in length")
        if classes is None:
            classes = np.union1d(true, predicted)
        classes = list(classes)
        index = {c: i for i, c in enumerate(classes)}
        C = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for a, b in zip(true.tolist(), predicted.tolist()):
            C[index[a], index[b]] += 1
        return cls(C, tuple(classes))

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self):
        return self.counts.sum()


@dataclass(frozen=True)
class EvaluationReport:
    accuracy: float
    balanced_accuracy: float
    f1: float
    precision: float
    recall: float
    mcc: float
    flags: tuple = ()
    selection_sens: float | None = None
    selection_spec: float | None = None
    selection_f1: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def combined(self) -> float:
        """Sum of the six classification metrics."""
        return float(sum(getattr(self, k) for k in METRIC_NAMES))

    def with_selection(self, sens, spec, f1) -> "EvaluationReport":
        d = asdict(self)
        d.update(selection_sens=sens, selection_spec=spec, selection_f1=f1)
        return EvaluationReport(**d)

    def items(self):
        """(key, value) pairs in a fixed order; unset selection metrics are omitted."""
        out = [(k, getattr(self, k)) for k in METRIC_NAMES]
        out.append(("combined", self.combined))
        for k in ("selection_sens", "selection_spec", "selection_f1"):
            if getattr(self, k) is not None:
                out.append((k, getattr(self, k)))
        out.extend(sorted(self.extra.items()))
        return out

    def to_text(self) -> str:
        lines = [f"{k}={fmt(v)}" for k, v in self.items()]
        lines.append("flags=" + ",".join(self.flags))
        return "\n".join(lines) + "\n"


def binary_metrics(cm: ConfusionMatrix) -> EvaluationReport:
    """Six metrics of a 2 x 2 matrix with the second class positive."""
    C = cm.counts
    if C.shape != (2, 2):
        raise ValueError("binary metrics need a 2 x 2 confusion matrix")
    if C.sum() == 0:
        raise ValueError("confusion matrix is empty")
    tn, fp, fn, tp = (int(x) for x in C.ravel())
    flags: list[str] = []
    acc = (tp + tn) / (tp + tn + fp + fn)
    rec = _ratio(tp, tp + fn, "recall", flags)
    spec = _ratio(tn, tn + fp, "specificity", flags)
    prec = _ratio(tp, tp + fp, "precision", flags)
    f1 = _ratio(2 * tp, 2 * tp + fp + fn, "f1", flags)
    den = float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = _mcc(tp * tn - fp * fn, np.sqrt(den), C, flags)
    return EvaluationReport(acc, (rec + spec) / 2, f1, prec, rec, mcc, tuple(flags))


def gorodkin_mcc(C, flags=None) -> float:
    """Multi-class MCC from a confusion matrix (rows true, columns predicted)."""
    C = np.asarray(C, dtype=float)
    s = C.sum()
    c = np.trace(C)
    t = C.sum(axis=1)
    p = C.sum(axis=0)
    den = np.sqrt((s * s - p @ p) * (s * s - t @ t))
    return _mcc(c * s - p @ t, den, C, flags if flags is not None else [])


def multiclass_metrics(cm: ConfusionMatrix, average: str = "weighted") -> EvaluationReport:
    """One-vs-rest metrics averaged by prevalence (``weighted``) or equally (``macro``)."""
    if average not in ("weighted", "macro"):
        raise ValueError("average must be 'weighted' or 'macro'")
    C = cm.counts.astype(float)
    n = C.sum()
    if n == 0:
        raise ValueError("confusion matrix is empty")
    flags: list[str] = []
    support = C.sum(axis=1)
    predicted = C.sum(axis=0)
    tp = np.diag(C)
    prec = np.array([_ratio(tp[k], predicted[k], f"precision[{k}]", flags) for k in range(len(tp))])
    rec = np.array([_ratio(tp[k], support[k], f"recall[{k}]", flags) for k in range(len(tp))])
    f1 = np.array([_ratio(2 * tp[k], support[k] + predicted[k], f"f1[{k}]", flags)
                   for k in range(len(tp))])
    w = support / n if average == "weighted" else np.full(len(tp), 1.0 / len(tp))
    present = support > 0
    balanced = float(rec[present].mean())
    mcc = gorodkin_mcc(C, flags)
    return EvaluationReport(float(tp.sum() / n), balanced, float(w @ f1), float(w @ prec),
                            float(w @ rec), mcc, tuple(flags))


def evaluate(true, predicted, classes=None, average: str = "weighted") -> EvaluationReport:
    """Metrics for label vectors: binary formulas when there are two classes."""
    cm = ConfusionMatrix.from_labels(true, predicted, classes)
    if cm.n_classes == 2:
        return binary_metrics(cm)
    return multiclass_metrics(cm, average)


def selection_metrics(selected, truth, p: int):
    """Sensitivity, specificity and F-1 of a selected feature set against the true signal set.

    Returns ``(sens, spec, f1, flags)``.
    """
    truth = set(np.asarray(list(truth), dtype=int).tolist())
    selected = set(np.asarray(list(selected), dtype=int).tolist())
    if not truth:
        raise ValueError("the true signal set is empty")
    if not truth <= set(range(p)) or not selected <= set(range(p)):
        raise ValueError("feature indices must lie in 0..p-1")
    flags: list[str] = []
    tp = len(selected & truth)
    fp = len(selected - truth)
    fn = len(truth - selected)
    tn = p - len(truth) - fp
    sens = tp / len(truth)
    spec = _ratio(tn, p - len(truth), "selection_spec", flags)
    f1 = _ratio(2 * tp, 2 * tp + fp + fn, "selection_f1", flags)
    if not selected:
        flags.append("selection_f1")
    return sens, spec, f1, tuple(flags)


def write_report(path, report: EvaluationReport):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_text())


def write_report_csv(path, report: EvaluationReport):
    keys = [k for k, _ in report.items()]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys + ["flags"])
        w.writerow([fmt(v) for _, v in report.items()] + [";".join(report.flags)])


__all__ = ["ConfusionMatrix", "EvaluationReport", "METRIC_NAMES", "binary_metrics",
           "multiclass_metrics", "gorodkin_mcc", "evaluate", "selection_metrics",
           "write_report", "write_report_csv"]
