"""Confusion matrices and accuracy/precision/recall/F1 in three averaging
modes: Binary (normal vs attack, attack positive), Macro, and Weighted.

0/0 metric cases (a class with no support or no predictions) are defined
as 0 and flagged, not raised. Published reference values are compared via
delta tables, never asserted: the reference table's own P/R/F1 are not
mutually consistent under any single averaging mode, so the report prints
deltas for all three.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CodeOutOfRange, EmptyMatrix, LengthMismatch

BINARY = "binary"
MACRO = "macro"
WEIGHTED = "weighted"
MODES = (BINARY, MACRO, WEIGHTED)

# Published results this pipeline reproduces, in percent.
REFERENCE_RESULTS = {
    "ensemble": {"accuracy": 98.22, "precision": 92.67, "recall": 96.68, "f1": 96.21},
    "ae": {"accuracy": 97.96, "precision": 90.68, "recall": 87.33, "f1": 93.45},
    "gan": {"accuracy": 90.28, "precision": 91.27, "recall": 92.86, "f1": 92.62},
    "knn": {"accuracy": 96.81},
    "cnnlstm": {"accuracy": 97.83},
}


def confusion(true_labels, predicted_labels, n_classes: int) -> np.ndarray:
    """counts[i][j] = rows with true class i predicted as class j."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise LengthMismatch(
            f"label vectors must be equal-length 1-D, got {t.shape} and {p.shape}")
    if t.size > 0:
        if t.min() < 0 or t.max() >= n_classes:
            raise CodeOutOfRange(f"true label outside [0,{n_classes})")
        if p.min() < 0 or p.max() >= n_classes:
            raise CodeOutOfRange(f"predicted label outside [0,{n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def binary_collapse(cm: np.ndarray) -> np.ndarray:
    """Collapse classes 1..n-1 into a single 'attack' class (index 1).

    Totals are preserved; an attack row predicted as any attack class counts
    as a correct binary prediction.
    """
    cm = np.asarray(cm, dtype=np.int64)
    out = np.zeros((2, 2), dtype=np.int64)
    out[0, 0] = cm[0, 0]
    out[0, 1] = cm[0, 1:].sum()
    out[1, 0] = cm[1:, 0].sum()
    out[1, 1] = cm[1:, 1:].sum()
    return out


@dataclass
class MetricSet:
    mode: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: list[dict] = field(default_factory=list)
    zero_division_flags: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_class": self.per_class,
            "zero_division_flags": self.zero_division_flags,
        }


def _per_class_rates(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str]]:
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0).astype(np.float64) - tp
    fn = cm.sum(axis=1).astype(np.float64) - tp
    flags: list[str] = []
    precision = np.zeros_like(tp)
    recall = np.zeros_like(tp)
    f1 = np.zeros_like(tp)
    for c in range(cm.shape[0]):
        pd = tp[c] + fp[c]
        rd = tp[c] + fn[c]
        if pd == 0:
            flags.append(f"class {c}: precision 0/0 -> 0")
        else:
            precision[c] = tp[c] / pd
        if rd == 0:
            flags.append(f"class {c}: recall 0/0 -> 0")
        else:
            recall[c] = tp[c] / rd
        if precision[c] + recall[c] > 0:
            f1[c] = 2 * precision[c] * recall[c] / (precision[c] + recall[c])
    return precision, recall, f1, flags


def metrics(cm: np.ndarray, mode: str) -> MetricSet:
    """Metric set for one averaging mode; Binary collapses to attack-vs-normal
    first and reports the attack class's rates."""
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise EmptyMatrix("metrics of an empty confusion matrix")
    if mode not in MODES:
        raise ValueError(f"unknown metrics mode {mode!r}")
    if mode == BINARY:
        cm = binary_collapse(cm) if cm.shape[0] != 2 else cm
    accuracy = int(np.trace(cm)) / total  # integer trace before the division
    precision, recall, f1, flags = _per_class_rates(cm)
    support = cm.sum(axis=1).astype(np.float64)
    per_class = [
        {"class": c, "precision": precision[c], "recall": recall[c],
         "f1": f1[c], "support": int(support[c])}
        for c in range(cm.shape[0])
    ]
    if mode == BINARY:
        p, r, f = precision[1], recall[1], f1[1]
    elif mode == MACRO:
        p, r, f = precision.mean(), recall.mean(), f1.mean()
    else:
        w = support / total
        p, r, f = float(w @ precision), float(w @ recall), float(w @ f1)
    return MetricSet(mode=mode, accuracy=accuracy, precision=float(p),
                     recall=float(r), f1=float(f), per_class=per_class,
                     zero_division_flags=flags)


@dataclass
class EvalReport:
    """Full evaluation output: matrices, all metric modes, run metadata."""

    confusion_5class: np.ndarray | None
    confusion_binary: np.ndarray
    metric_sets: dict[str, MetricSet]
    metadata: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        """Binary-anomaly accuracy (the headline metric)."""
        return self.metric_sets[BINARY].accuracy

    def as_dict(self) -> dict:
        return {
            "confusion_5class": None if self.confusion_5class is None
            else self.confusion_5class.tolist(),
            "confusion_binary": self.confusion_binary.tolist(),
            "metrics": {mode: ms.as_dict() for mode, ms in self.metric_sets.items()},
            "metadata": self.metadata,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.as_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        sets = {
            mode: MetricSet(
                mode=mode, accuracy=ms["accuracy"], precision=ms["precision"],
                recall=ms["recall"], f1=ms["f1"], per_class=ms["per_class"],
                zero_division_flags=ms["zero_division_flags"])
            for mode, ms in d["metrics"].items()
        }
        return cls(
            confusion_5class=None if d["confusion_5class"] is None
            else np.asarray(d["confusion_5class"], dtype=np.int64),
            confusion_binary=np.asarray(d["confusion_binary"], dtype=np.int64),
            metric_sets=sets,
            metadata=d.get("metadata", {}),
        )


def build_report(true_labels, predicted_labels, n_classes: int = 5,
                 metadata: dict | None = None) -> EvalReport:
    """Report for a 5-class classifier (binary views derived)."""
    cm5 = confusion(true_labels, predicted_labels, n_classes)
    return EvalReport(
        confusion_5class=cm5,
        confusion_binary=binary_collapse(cm5),
        metric_sets={mode: metrics(cm5, mode) for mode in MODES},
        metadata=metadata or {},
    )


def build_binary_report(true_binary, predicted_binary,
                        metadata: dict | None = None) -> EvalReport:
    """Report for an anomaly scorer that only produces normal/attack verdicts."""
    cm2 = confusion(true_binary, predicted_binary, 2)
    return EvalReport(
        confusion_5class=None,
        confusion_binary=cm2,
        metric_sets={mode: metrics(cm2, mode) for mode in MODES},
        metadata=metadata or {},
    )


def compare_to_reference(report: EvalReport, reference: dict[str, float],
                         tolerance: float) -> list[dict]:
    """Per metric and mode: ours, reference, delta, pass/fail (or n/a).

    Reference values are in percent; report values in [0,1].
    """
    rows = []
    for mode, ms in sorted(report.metric_sets.items()):
        ours = {"accuracy": ms.accuracy, "precision": ms.precision,
                "recall": ms.recall, "f1": ms.f1}
        for name in ("accuracy", "precision", "recall", "f1"):
            ref = reference.get(name)
            if ref is None:
                rows.append({"mode": mode, "metric": name, "ours": ours[name],
                             "reference": None, "delta": None, "status": "n/a"})
                continue
            delta = ours[name] - ref / 100.0
            rows.append({
                "mode": mode, "metric": name, "ours": ours[name],
                "reference": ref / 100.0, "delta": delta,
                "status": "pass" if abs(delta) <= tolerance else "fail",
            })
    return rows


def format_delta_table(rows: list[dict]) -> str:
    lines = [f"{'mode':<10}{'metric':<12}{'ours':>10}{'reference':>12}{'delta':>10}  status"]
    for r in rows:
        ours = f"{r['ours'] * 100:.2f}%"
        ref = "--" if r["reference"] is None else f"{r['reference'] * 100:.2f}%"
        delta = "--" if r["delta"] is None else f"{r['delta'] * 100:+.2f}pp"
        lines.append(
            f"{r['mode']:<10}{r['metric']:<12}{ours:>10}{ref:>12}{delta:>10}  {r['status']}")
    return "\n".join(lines)
