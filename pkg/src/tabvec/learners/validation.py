"""Fold construction and the cross-validation loop."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .metrics import roc_auc


class FoldError(ValueError):
    pass


def stratified_folds(y, folds: int, seed: int = 0) -> np.ndarray:
    """Seeded stratified fold assignment: each class is shuffled, then dealt
    round-robin, continuing the deal across classes so fold sizes differ by
    at most one."""
    y = np.asarray(y)
    if folds < 2:
        raise FoldError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    assign = np.empty(len(y), dtype=np.int64)
    offset = 0
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        assign[idx] = (offset + np.arange(len(idx))) % folds
        offset += len(idx)
    return assign


def grouped_split(group_keys: Sequence[str], folds: int) -> np.ndarray:
    """Assign whole groups to folds, largest group first, each to the currently
    smallest fold (lowest index on ties)."""
    sizes = Counter(group_keys)
    if len(sizes) < folds:
        raise FoldError(f"{len(sizes)} groups cannot fill {folds} folds")
    first_seen = {g: i for i, g in reversed(list(enumerate(group_keys)))}
    order = sorted(sizes, key=lambda g: (-sizes[g], first_seen[g]))
    load = [0] * folds
    fold_of = {}
    for g in order:
        f = min(range(folds), key=lambda j: (load[j], j))
        fold_of[g] = f
        load[f] += sizes[g]
    return np.array([fold_of[g] for g in group_keys], dtype=np.int64)


@dataclass
class EvalReport:
    method: str
    fold_scores: list[float]
    train_size: int
    metric: str = "roc_auc"
    extra: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_scores))

    @property
    def stderr(self) -> float:
        k = len(self.fold_scores)
        return float(np.std(self.fold_scores, ddof=1) / math.sqrt(k)) if k > 1 else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean"] = self.mean
        d["stderr"] = self.stderr
        return d


def cross_validate(dataset, make_model: Callable[[], object], folds: int = 7, seed: int = 0,
                   method: str = "", groups: Sequence[str] | None = None) -> EvalReport:
    """K-fold ROC-AUC of a model built fresh per fold by ``make_model``.

    The model gets ``fit(features_table, y)`` on the training fold only and
    ``predict_proba(features_table)`` on the held-out fold. Folds are
    stratified, or grouped when the dataset carries group keys.
    """
    y = dataset.y
    groups = groups if groups is not None else dataset.group_keys
    if groups is not None:
        assign = grouped_split(groups, folds)
    else:
        assign = stratified_folds(y, folds, seed)
    scores = []
    for f in range(folds):
        test = np.flatnonzero(assign == f)
        train = np.flatnonzero(assign != f)
        if len(np.unique(y[test])) < 2 or len(np.unique(y[train])) < 2:
            raise FoldError(f"fold {f} holds a single class")
        model = make_model()
        model.fit(dataset.features.take(train), y[train])
        proba = model.predict_proba(dataset.features.take(test))
        scores.append(roc_auc(proba, y[test]))
    return EvalReport(method, scores, int(len(y)))
