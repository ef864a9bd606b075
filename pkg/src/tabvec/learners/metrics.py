"""Evaluation statistics: ROC-AUC, mean rank, relative gain."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def roc_auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in shape")
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC-AUC needs both classes")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def rank_matrix(scores) -> np.ndarray:
    """Per-task ranks (column-wise) of a ``methods x tasks`` score matrix; 1 = best."""
    S = np.asarray(scores, dtype=np.float64)
    if S.ndim != 2:
        raise ValueError("scores must be a methods x tasks matrix")
    if not np.all(np.isfinite(S)):
        raise ValueError("missing or non-finite entries in score matrix")
    return np.column_stack([rankdata(-S[:, t]) for t in range(S.shape[1])]) if S.shape[1] else S


def mean_rank(scores) -> np.ndarray:
    return rank_matrix(scores).mean(axis=1)


def relative_gain(method: float, baseline: float) -> float:
    """Percentage improvement of ``method`` over ``baseline``."""
    if baseline <= 0:
        raise ValueError("baseline must be positive")
    return 100.0 * (method - baseline) / baseline


roc_auc_gain = relative_gain
