"""Classification metrics: confusion matrix, accuracy, macro-F1, ROC AUC."""

from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np


class MetricError(ValueError):
    pass


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred, strict=True):
        cm[t, p] += 1
    return cm


def accuracy(cm: np.ndarray) -> float:
    total = cm.sum()
    if total == 0:
        raise MetricError("empty confusion matrix")
    return float(np.trace(cm) / total)


def per_class_f1(cm: np.ndarray) -> np.ndarray:
    """F1 per class; any 0/0 precision, recall or F1 counts as 0."""
    tp = np.diag(cm).astype(np.float64)
    pred = cm.sum(axis=0).astype(np.float64)
    true = cm.sum(axis=1).astype(np.float64)
    f1 = np.zeros(len(tp))
    for k in range(len(tp)):
        prec = tp[k] / pred[k] if pred[k] else 0.0
        rec = tp[k] / true[k] if true[k] else 0.0
        f1[k] = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return f1


def macro_f1(cm: np.ndarray) -> float:
    if cm.sum() == 0:
        raise MetricError("empty confusion matrix")
    return float(per_class_f1(cm).mean())


def auc(scores: Iterable[tuple[float, int]]) -> float:
    """Mann-Whitney AUC: P(positive score > negative score), ties count half.

    Computed from average ranks, O(n log n).
    """
    pairs = list(scores)
    s = np.array([p[0] for p in pairs], dtype=np.float64)
    y = np.array([p[1] for p in pairs], dtype=np.int64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != len(y):
        raise MetricError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both positive and negative samples")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s))
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[y == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def report(y_true, y_pred, n_classes: int, pos_scores=None) -> dict:
    """Metrics dictionary in the report JSON layout.

    ``pos_scores`` (probability of class 1) enables AUC for binary tasks.
    """
    cm = confusion_matrix(y_true, y_pred, n_classes)
    out = {
        "macro_f1": macro_f1(cm),
        "accuracy": accuracy(cm),
        "auc": None,
        "confusion": cm.tolist(),
    }
    if pos_scores is not None and n_classes == 2:
        try:
            out["auc"] = auc(zip(pos_scores, y_true))
        except MetricError:
            out["auc"] = None
    return out


def dumps_report(rep: dict) -> str:
    return json.dumps(rep, sort_keys=True, indent=2) + "\n"
