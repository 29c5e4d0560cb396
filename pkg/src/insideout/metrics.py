"""Confusion matrix and the derived classification report.

Conventions: m[i][j] counts true class i predicted as class j; precision is
column-based, recall row-based; a zero denominator yields metric 0.0 plus a
warning flag so macro averages stay defined.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .labels import NUM_CLASSES, EMOTION_NAMES


@dataclass(frozen=True)
class ConfusionMatrix:
    m: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.m, dtype=np.int64)  # private copy, frozen below
        m.setflags(write=False)
        object.__setattr__(self, "m", m)
        if m.shape != (NUM_CLASSES, NUM_CLASSES):
            raise ValueError(f"confusion matrix must be {NUM_CLASSES}x{NUM_CLASSES}, got {m.shape}")
        if (m < 0).any():
            raise ValueError("confusion matrix entries must be non-negative")

    @property
    def total(self) -> int:
        return int(self.m.sum())


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassificationReport:
    per_class: tuple[ClassMetrics, ...]
    accuracy: float
    macro_avg: tuple[float, float, float]
    weighted_avg: tuple[float, float, float]
    warnings: tuple[str, ...] = ()

    @property
    def total_support(self) -> int:
        return sum(c.support for c in self.per_class)


def confusion_from_predictions(
    true_labels: Sequence[int], predicted_labels: Sequence[int]
) -> ConfusionMatrix:
    """Exact (true, predicted) counts; independent of pair order."""
    truth = np.asarray(true_labels, dtype=np.int64)
    pred = np.asarray(predicted_labels, dtype=np.int64)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise ValueError(
            f"label sequences must be equal-length 1-D, got {truth.shape} and {pred.shape}"
        )
    if truth.size == 0:
        raise ValueError("label sequences must be non-empty")
    for name, arr in (("true", truth), ("predicted", pred)):
        if arr.min() < 0 or arr.max() >= NUM_CLASSES:
            bad = int(arr[(arr < 0) | (arr >= NUM_CLASSES)][0])
            raise ValueError(f"invalid {name} label index {bad}")
    m = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(m, (truth, pred), 1)
    return ConfusionMatrix(m)


def accuracy_from_confusion(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("cannot compute accuracy of an empty confusion matrix")
    return float(np.trace(cm.m) / cm.total)


def report_from_confusion(cm: ConfusionMatrix) -> ClassificationReport:
    """Per-class precision/recall/F1 plus accuracy, macro and weighted averages."""
    if cm.total == 0:
        raise ValueError("cannot build a report from an empty confusion matrix")
    m = cm.m.astype(np.float64)
    row_sums = m.sum(axis=1)
    col_sums = m.sum(axis=0)
    diag = np.diag(m)

    warnings: list[str] = []
    per_class: list[ClassMetrics] = []
    for c in range(NUM_CLASSES):
        if col_sums[c] > 0:
            precision = diag[c] / col_sums[c]
        else:
            precision = 0.0
            warnings.append(f"precision undefined for class {EMOTION_NAMES[c]} (no predictions)")
        if row_sums[c] > 0:
            recall = diag[c] / row_sums[c]
        else:
            recall = 0.0
            warnings.append(f"recall undefined for class {EMOTION_NAMES[c]} (no support)")
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
        per_class.append(
            ClassMetrics(
                precision=float(precision),
                recall=float(recall),
                f1=float(f1),
                support=int(row_sums[c]),
            )
        )

    supports = np.array([c.support for c in per_class], dtype=np.float64)
    stacked = np.array([[c.precision, c.recall, c.f1] for c in per_class])
    macro = stacked.mean(axis=0)
    weighted = supports @ stacked / supports.sum()

    return ClassificationReport(
        per_class=tuple(per_class),
        accuracy=float(np.trace(m) / m.sum()),
        macro_avg=tuple(float(v) for v in macro),
        weighted_avg=tuple(float(v) for v in weighted),
        warnings=tuple(warnings),
    )


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0.0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def render_report_text(report: ClassificationReport, partition: str) -> str:
    """Human-readable table, 3 decimals, classes listed alphabetically."""
    lines = [
        f"classification report ({partition} partition, {NUM_CLASSES} classes)",
        "",
        f"{'Class':<10s} {'Precision':>9s} {'Recall':>9s} {'F1':>9s} {'Support':>9s}",
    ]
    order = sorted(range(NUM_CLASSES), key=lambda c: EMOTION_NAMES[c])
    for c in order:
        cls = report.per_class[c]
        lines.append(
            f"{EMOTION_NAMES[c]:<10s} {cls.precision:>9.3f} {cls.recall:>9.3f} "
            f"{cls.f1:>9.3f} {cls.support:>9d}"
        )
    lines.append("")
    lines.append(f"{'Accuracy':<10s} {report.accuracy:>9.3f}")
    mp, mr, mf = report.macro_avg
    wp, wr, wf = report.weighted_avg
    lines.append(f"{'Macro avg':<10s} {mp:>9.3f} {mr:>9.3f} {mf:>9.3f} {report.total_support:>9d}")
    lines.append(f"{'Wtd avg':<10s} {wp:>9.3f} {wr:>9.3f} {wf:>9.3f} {report.total_support:>9d}")
    if report.warnings:
        lines.append("")
        lines.extend(f"warning: {w}" for w in report.warnings)
    return "\n".join(lines) + "\n"


def report_to_dict(report: ClassificationReport, partition: str) -> dict:
    """Machine-readable report at full precision."""
    return {
        "partition": partition,
        "per_class": {
            EMOTION_NAMES[c]: {
                "precision": report.per_class[c].precision,
                "recall": report.per_class[c].recall,
                "f1": report.per_class[c].f1,
                "support": report.per_class[c].support,
            }
            for c in range(NUM_CLASSES)
        },
        "accuracy": report.accuracy,
        "macro_avg": {
            "precision": report.macro_avg[0],
            "recall": report.macro_avg[1],
            "f1": report.macro_avg[2],
        },
        "weighted_avg": {
            "precision": report.weighted_avg[0],
            "recall": report.weighted_avg[1],
            "f1": report.weighted_avg[2],
        },
        "warnings": list(report.warnings),
    }


def report_from_dict(payload: dict) -> tuple[ClassificationReport, str]:
    """Inverse of report_to_dict, for re-rendering saved evaluations."""
    per_class = tuple(
        ClassMetrics(
            precision=payload["per_class"][name]["precision"],
            recall=payload["per_class"][name]["recall"],
            f1=payload["per_class"][name]["f1"],
            support=payload["per_class"][name]["support"],
        )
        for name in EMOTION_NAMES
    )
    report = ClassificationReport(
        per_class=per_class,
        accuracy=payload["accuracy"],
        macro_avg=(
            payload["macro_avg"]["precision"],
            payload["macro_avg"]["recall"],
            payload["macro_avg"]["f1"],
        ),
        weighted_avg=(
            payload["weighted_avg"]["precision"],
            payload["weighted_avg"]["recall"],
            payload["weighted_avg"]["f1"],
        ),
        warnings=tuple(payload.get("warnings", ())),
    )
    return report, payload["partition"]


def confusion_to_csv(cm: ConfusionMatrix, path: str | Path) -> None:
    """CSV with named header row/column, true classes as rows."""
    lines = ["true\\pred," + ",".join(EMOTION_NAMES)]
    for c in range(NUM_CLASSES):
        lines.append(EMOTION_NAMES[c] + "," + ",".join(str(int(v)) for v in cm.m[c]))
    Path(path).write_text("\n".join(lines) + "\n")


def save_report_json(report: ClassificationReport, partition: str, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report, partition), indent=2) + "\n")
