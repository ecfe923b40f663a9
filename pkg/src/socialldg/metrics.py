"""Classification metrics: confusion matrices, macro F1 and per-task reports."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np


def confusion_matrix(predictions, labels, num_classes: int) -> np.ndarray:
    """``M[true, predicted]`` counts."""
    p = np.asarray(predictions, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if p.shape != y.shape:
        raise ValueError(f"predictions {p.shape} and labels {y.shape} differ in shape")
    if p.size == 0:
        raise ValueError("empty input")
    if y.min() < 0 or y.max() >= num_classes or p.min() < 0 or p.max() >= num_classes:
        raise ValueError(f"class index outside [0, {num_classes})")
    return np.bincount(y * num_classes + p, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def per_class_f1(cm: np.ndarray) -> np.ndarray:
    tp = np.diag(cm).astype(np.float64)
    denom = cm.sum(0) + cm.sum(1)  # 2tp + fp + fn
    return np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)


def macro_f1(predictions, labels, num_classes: int) -> float:
    """Unweighted mean of per-class F1; classes that never occur count as 0."""
    return float(per_class_f1(confusion_matrix(predictions, labels, num_classes)).mean())


def accuracy(predictions, labels) -> float:
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.size == 0:
        raise ValueError("empty input")
    return float((p == y).mean())


def majority_baseline_f1(train_labels, test_labels, num_classes: int) -> float:
    major = int(np.bincount(np.asarray(train_labels), minlength=num_classes).argmax())
    return macro_f1(np.full(len(test_labels), major), test_labels, num_classes)


def task_report(
    predictions: Mapping[str, np.ndarray],
    labels: Mapping[str, np.ndarray],
    num_classes: Mapping[str, int],
    tasks: Sequence[str] | None = None,
) -> dict:
    """Per-task macro F1, accuracy and confusion matrix, plus the F1 average."""
    tasks = list(tasks or predictions)
    per = {}
    for t in tasks:
        if t not in labels:
            raise ValueError(f"missing labels for task {t!r}")
        cm = confusion_matrix(predictions[t], labels[t], num_classes[t])
        per[t] = {
            "macro_f1": float(per_class_f1(cm).mean()),
            "accuracy": float(np.trace(cm) / cm.sum()),
            "confusion": cm.tolist(),
        }
    avg = float(np.mean([per[t]["macro_f1"] for t in tasks]))
    return {"tasks": per, "avg_f1": avg, "averaging": "macro"}


def subset_average(report: dict, tasks: Sequence[str]) -> float:
    return float(np.mean([report["tasks"][t]["macro_f1"] for t in tasks]))
