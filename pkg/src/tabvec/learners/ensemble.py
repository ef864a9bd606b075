"""Soft voting and stacking over base-model probabilities."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .linear import logreg_fit
from .validation import stratified_folds


def voting_ensemble(prob_lists: Sequence[Sequence[float]]) -> np.ndarray:
    if len(prob_lists) == 0:
        raise ValueError("voting needs at least one member")
    P = np.asarray(prob_lists, dtype=np.float64)
    return P.mean(axis=0)


def stacking_ensemble(base_probs_train, y_train, base_probs_test, l2: float = 1e-2) -> np.ndarray:
    """Logistic regression over base-model probabilities (columns = base models).

    ``base_probs_train`` must be out-of-fold predictions; see
    :func:`out_of_fold_probs`.
    """
    Ptr = np.asarray(base_probs_train, dtype=np.float64)
    Pte = np.asarray(base_probs_test, dtype=np.float64)
    if Ptr.ndim == 1:
        Ptr, Pte = Ptr[:, None], Pte[:, None]
    meta = logreg_fit(Ptr, y_train, l2=l2)
    return meta.predict_proba(Pte)


def out_of_fold_probs(fit_predict: Callable[[np.ndarray, np.ndarray], np.ndarray], n: int,
                      y, folds: int = 5, seed: int = 0) -> np.ndarray:
    """Run ``fit_predict(train_idx, test_idx)`` over stratified folds and
    collect each row's prediction from the fold that held it out."""
    assign = stratified_folds(y, folds, seed)
    out = np.empty(n)
    for f in range(folds):
        test = np.flatnonzero(assign == f)
        train = np.flatnonzero(assign != f)
        out[test] = fit_predict(train, test)
    return out
