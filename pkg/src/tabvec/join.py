"""Many-to-one fuzzy join by 1-nearest-neighbor on cosine similarity."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .encoders import MinHashEncoder, MinHashParams, TfidfModel
from .table import Table

DEFAULT_TAUS = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
BLOCK_ROWS = 1024


@dataclass
class JoinSpec:
    left_key: str
    right_key: str
    encoder: str = "tfidf"  # "tfidf" | "minhash" | "embedding"
    tau: float = 0.5
    ngram_range: tuple[int, int] = (2, 3)
    minhash: MinHashParams = field(default_factory=MinHashParams)
    embedder: object | None = None

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.encoder not in ("tfidf", "minhash", "embedding"):
            raise ValueError(f"unknown join encoder {self.encoder!r}")


@dataclass
class JoinResult:
    matches: list[int | None]  # per right row: left index or None (no match)
    scores: list[float]  # best cosine similarity per right row
    tau: float

    @property
    def n_predicted(self) -> int:
        return sum(m is not None for m in self.matches)

    def to_dict(self) -> dict:
        return {"tau": self.tau, "matches": self.matches, "scores": self.scores,
                "n_predicted": self.n_predicted}


def _l2_normalize(X):
    if sp.issparse(X):
        norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        return sp.diags(inv) @ X
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return X * inv[:, None]


def encode_keys(right_values: Sequence[str], left_values: Sequence[str], spec: JoinSpec):
    """L2-normalized vectors for both key columns.

    String encoders are fitted on the union of the two columns.
    """
    right_values, left_values = list(right_values), list(left_values)
    if spec.encoder == "tfidf":
        model = TfidfModel.fit(left_values + right_values, spec.ngram_range)
        R, L = model.transform(right_values).values, model.transform(left_values).values
    elif spec.encoder == "minhash":
        enc = MinHashEncoder(spec.minhash)
        R, L = enc.transform(right_values).values, enc.transform(left_values).values
    else:
        if spec.embedder is None:
            raise ValueError("embedding join needs an embedder")
        R = spec.embedder.embed(right_values).values
        L = spec.embedder.embed(left_values).values
    return _l2_normalize(R), _l2_normalize(L)


def nearest_left(R, L, block_rows: int = BLOCK_ROWS) -> tuple[np.ndarray, np.ndarray]:
    """Best left index and cosine per right row; ties go to the lowest left index."""
    n = R.shape[0]
    best = np.empty(n, dtype=np.int64)
    sims = np.empty(n)
    LT = L.T.tocsr() if sp.issparse(L) else np.asarray(L).T
    for start in range(0, n, block_rows):
        block = R[start : start + block_rows]
        S = block @ LT
        S = S.toarray() if sp.issparse(S) else np.asarray(S)
        best[start : start + len(S)] = np.argmax(S, axis=1)
        sims[start : start + len(S)] = S[np.arange(len(S)), best[start : start + len(S)]]
    return best, sims


def apply_threshold(best: np.ndarray, sims: np.ndarray, tau: float) -> JoinResult:
    matches = [int(b) if s >= tau else None for b, s in zip(best, sims)]
    return JoinResult(matches, [float(s) for s in sims], tau)


def join(right: Table, left: Table, spec: JoinSpec) -> JoinResult:
    if left.n_rows == 0:
        raise ValueError("left table is empty")
    R, L = encode_keys(right.column(spec.right_key), left.column(spec.left_key), spec)
    best, sims = nearest_left(R, L)
    return apply_threshold(best, sims, spec.tau)


def evaluate_join(result: JoinResult, gold: Sequence[int | None]) -> tuple[float, float, float]:
    """Precision, recall and F1 of predicted matches against ``gold``."""
    if len(gold) != len(result.matches):
        raise ValueError("gold must cover every right row")
    predicted = sum(m is not None for m in result.matches)
    relevant = sum(g is not None for g in gold)
    correct = sum(m is not None and m == g for m, g in zip(result.matches, gold))
    precision = correct / predicted if predicted else 0.0
    recall = correct / relevant if relevant else 0.0
    # harmonic mean of precision and recall, in a form free of extra rounding
    f1 = 2 * correct / (predicted + relevant) if correct else 0.0
    return precision, recall, f1


@dataclass
class SweepResult:
    best_tau: float
    best_f1: float
    curve: list[dict]  # one {tau, precision, recall, f1, n_predicted} per threshold

    def to_dict(self) -> dict:
        return {"best_tau": self.best_tau, "best_f1": self.best_f1, "curve": self.curve}


def sweep_thresholds(right: Table, left: Table, spec: JoinSpec, gold: Sequence[int | None],
                     taus: Sequence[float] = DEFAULT_TAUS) -> SweepResult:
    """Encode once, then score every threshold; the best F1 keeps the lowest tau on ties."""
    R, L = encode_keys(right.column(spec.right_key), left.column(spec.left_key), spec)
    best, sims = nearest_left(R, L)
    curve = []
    for tau in sorted(taus):
        res = apply_threshold(best, sims, tau)
        p, r, f = evaluate_join(res, gold)
        curve.append({"tau": tau, "precision": p, "recall": r, "f1": f,
                      "n_predicted": res.n_predicted})
    top = max(curve, key=lambda c: c["f1"])
    return SweepResult(top["tau"], top["f1"], curve)


def load_gold(path, right_ids: Sequence[str], left_ids: Sequence[str]) -> list[int | None]:
    """Read a ``right_id,left_id`` CSV (header optional); empty ``left_id`` means no match.

    Ids are looked up in ``right_ids``/``left_ids``; right rows absent from the
    file have no match.
    """
    r_index = {k: i for i, k in enumerate(right_ids)}
    l_index = {k: i for i, k in enumerate(left_ids)}
    gold: list[int | None] = [None] * len(right_ids)
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if lineno == 1 and row[0] == "right_id":
                continue
            rid = row[0]
            lid = row[1] if len(row) > 1 else ""
            if rid not in r_index:
                raise ValueError(f"{path}:{lineno}: unknown right id {rid!r}")
            if lid and lid not in l_index:
                raise ValueError(f"{path}:{lineno}: unknown left id {lid!r}")
            gold[r_index[rid]] = l_index[lid] if lid else None
    return gold
