"""Gradient-boosted regression trees for binary classification (logistic loss)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

_PROB_CLIP = 1e-3


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def log_loss(y: np.ndarray, score: np.ndarray) -> float:
    """Mean binary log loss computed from raw scores (log-odds)."""
    # log(1 + e^-s) for y=1, log(1 + e^s) for y=0
    return float(np.mean(np.logaddexp(0.0, np.where(y == 1, -score, score))))


@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 1
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")
        if self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("max_depth and min_samples_leaf must be >= 1")


@dataclass
class RegressionTree:
    """Flat array tree. Internal nodes have ``feature >= 0``; ``x <= threshold`` goes left."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = feature[node]
            internal = f >= 0
            if not internal.any():
                break
            r, n = rows[internal], node[internal]
            go_left = X[r, f[internal]] <= threshold[n]
            node[r] = np.where(go_left, left[n], right[n])
        return np.asarray(self.value)[node]

    def to_dict(self) -> dict:
        return dict(feature=self.feature, threshold=self.threshold, left=self.left,
                    right=self.right, value=self.value)


def _best_split(XT_sorted: np.ndarray, r_sorted: np.ndarray, min_leaf: int):
    """Exact greedy split maximizing residual variance reduction.

    Inputs are ``d x m`` arrays with each row sorted by that feature. Ties in
    gain go to the lowest feature, then the lowest cut position.
    """
    d, m = r_sorted.shape
    if m < 2 * min_leaf:
        return None
    csum = np.cumsum(r_sorted, axis=1)[:, :-1]
    total = r_sorted[0].sum()
    n_left = np.arange(1, m, dtype=np.float64)
    n_right = m - n_left
    right = total - csum
    right *= right
    right /= n_right
    gain = csum * csum
    gain /= n_left
    gain += right
    invalid = XT_sorted[:, :-1] >= XT_sorted[:, 1:]
    invalid[:, : min_leaf - 1] = True
    if min_leaf > 1:
        invalid[:, m - min_leaf :] = True
    gain[invalid] = -np.inf
    flat = int(np.argmax(gain))
    j, pos = divmod(flat, m - 1)
    best = gain[j, pos] - total * total / m
    if not np.isfinite(best) or best <= 1e-12 * max(1.0, abs(total)):
        return None
    lo, hi = XT_sorted[j, pos], XT_sorted[j, pos + 1]
    thr = lo + (hi - lo) / 2.0
    if not thr < hi:
        thr = lo
    return j, float(thr)


def fit_tree(X: np.ndarray, residual: np.ndarray, hessian: np.ndarray, order: np.ndarray,
             max_depth: int, min_leaf: int, sorted_values: np.ndarray | None = None) -> RegressionTree:
    """Grow one tree level by level; leaves hold a Newton step sum(r) / sum(h).

    ``order`` is the ``d x n`` per-feature argsort of the rows in ``X`` and
    ``sorted_values`` the matching feature values (computed when omitted).
    """
    n, d = X.shape
    if sorted_values is None:
        sorted_values = np.take_along_axis(X.T, order, axis=1)
    tree = RegressionTree()
    root = tree.add_node()
    frontier = [(root, order, sorted_values)]
    for depth in range(max_depth + 1):
        nxt = []
        for node, idx, xs in frontier:
            rows = idx[0]
            split = None
            if depth < max_depth:
                split = _best_split(xs, residual[idx], min_leaf)
            if split is None:
                den = hessian[rows].sum()
                tree.value[node] = float(residual[rows].sum() / den) if den > 1e-150 else 0.0
                continue
            j, thr = split
            goes_left = np.zeros(n, dtype=bool)
            goes_left[rows[X[rows, j] <= thr]] = True
            m_left = int(goes_left[rows].sum())
            mask = goes_left[idx]
            m_right = idx.shape[1] - m_left
            tree.feature[node], tree.threshold[node] = j, thr
            lchild, rchild = tree.add_node(), tree.add_node()
            tree.left[node], tree.right[node] = lchild, rchild
            nxt += [(lchild, idx[mask].reshape(d, m_left), xs[mask].reshape(d, m_left)),
                    (rchild, idx[~mask].reshape(d, m_right), xs[~mask].reshape(d, m_right))]
        frontier = nxt
        if not frontier:
            break
    return tree


@dataclass
class GbdtModel:
    initial_log_odds: float
    trees: list[RegressionTree]
    learning_rate: float
    n_features: int
    train_loss: list[float] = field(default_factory=list)
    single_class: bool = False

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        score = np.full(X.shape[0], self.initial_log_odds)
        for t in self.trees:
            score += self.learning_rate * t.predict(X)
        return score

    def predict_proba(self, X) -> np.ndarray:
        return np.clip(sigmoid(self.decision_function(X)), 1e-15, 1 - 1e-15)


def gbdt_fit(X, y, params: GbdtParams = GbdtParams()) -> GbdtModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError("X must be 2-D with one row per label")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    n, d = X.shape
    base = float(np.clip(y.mean(), _PROB_CLIP, 1 - _PROB_CLIP))
    init = float(np.log(base / (1 - base)))
    if len(np.unique(y)) < 2:
        log.warning("single-class labels; returning a prior-only model")
        return GbdtModel(init, [], params.learning_rate, d, [log_loss(y, np.full(n, init))], True)
    if d == 0:
        return GbdtModel(init, [], params.learning_rate, 0, [log_loss(y, np.full(n, init))])

    rng = np.random.default_rng(params.seed)
    full_order = np.argsort(X, axis=0, kind="stable").T.copy()
    full_values = np.take_along_axis(X.T, full_order, axis=1)
    n_sub = max(1, int(round(params.subsample * n)))
    score = np.full(n, init)
    trees, losses = [], [log_loss(y, score)]
    for _ in range(params.n_trees):
        p = sigmoid(score)
        residual = y - p
        hessian = p * (1 - p)
        if n_sub < n:
            keep = np.zeros(n, dtype=bool)
            keep[rng.choice(n, size=n_sub, replace=False)] = True
            kept = keep[full_order]
            order = full_order[kept].reshape(d, n_sub)
            values = full_values[kept].reshape(d, n_sub)
        else:
            order, values = full_order, full_values
        tree = fit_tree(X, residual, hessian, order, params.max_depth, params.min_samples_leaf, values)
        trees.append(tree)
        score = score + params.learning_rate * tree.predict(X)
        losses.append(log_loss(y, score))
    return GbdtModel(init, trees, params.learning_rate, d, losses)


def gbdt_predict_proba(model: GbdtModel, X) -> np.ndarray:
    return model.predict_proba(X)
