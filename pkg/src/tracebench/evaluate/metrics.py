"""Clustering and classification metrics.

Hungarian-mapped accuracy and NMI score cluster assignments against ground
truth without assuming any label correspondence; macro-F1 scores supervised
predictions with every true class weighted equally.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import InvalidInput


def _as_labels(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 1 or b.ndim != 1:
        raise InvalidInput("label arrays must be 1-D")
    if len(a) != len(b):
        raise InvalidInput(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise InvalidInput("empty label arrays")
    return a, b


def _contingency(pred: np.ndarray, true: np.ndarray) -> np.ndarray:
    """Rows = distinct predicted labels, columns = distinct true labels."""
    pred_ids = {v: i for i, v in enumerate(np.unique(pred))}
    true_ids = {v: i for i, v in enumerate(np.unique(true))}
    table = np.zeros((len(pred_ids), len(true_ids)), dtype=np.int64)
    for p, t in zip(pred, true):
        table[pred_ids[p], true_ids[t]] += 1
    return table


def hungarian_accuracy(pred_clusters, true_labels) -> float:
    """Accuracy under the best one-to-one cluster-to-class assignment.

    The contingency table is padded to a square so extra clusters (or extra
    classes) match dummy partners that contribute zero.
    """
    pred, true = _as_labels(pred_clusters, true_labels)
    table = _contingency(pred, true)
    size = max(table.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return float(padded[rows, cols].sum()) / len(pred)


def nmi(pred_clusters, true_labels) -> float:
    """Normalized mutual information, 2*I(Y;C) / (H(Y) + H(C)).

    Natural-log entropies over the empirical joint distribution. Both sides
    constant means the partitions agree trivially, so that case scores 1.
    """
    pred, true = _as_labels(pred_clusters, true_labels)
    table = _contingency(pred, true).astype(np.float64)
    n = table.sum()
    p_joint = table / n
    p_pred = p_joint.sum(axis=1)
    p_true = p_joint.sum(axis=0)

    def entropy(p: np.ndarray) -> float:
        nz = p[p > 0]
        return float(-(nz * np.log(nz)).sum())

    h_pred = entropy(p_pred)
    h_true = entropy(p_true)
    if h_pred + h_true == 0.0:
        return 1.0
    mask = p_joint > 0
    outer = p_pred[:, None] * p_true[None, :]
    mi = float((p_joint[mask] * np.log(p_joint[mask] / outer[mask])).sum())
    value = 2.0 * mi / (h_pred + h_true)
    return float(min(max(value, 0.0), 1.0))


def macro_f1(pred, true) -> float:
    """Unweighted mean per-class F1 over classes present in the true labels.

    A class with zero precision+recall contributes 0 rather than NaN.
    """
    pred, true = _as_labels(pred, true)
    scores = []
    for cls in np.unique(true):
        tp = int(np.sum((pred == cls) & (true == cls)))
        fp = int(np.sum((pred == cls) & (true != cls)))
        fn = int(np.sum((pred != cls) & (true == cls)))
        denom = 2 * tp + fp + fn
        scores.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(scores))
