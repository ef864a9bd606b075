"""Classical column encoders: MinHash, character TF-IDF, one-hot, datetime, scaling."""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .ngrams import char_ngrams
from .serialize import envelope, open_envelope
from .table import parse_datetime

MASK64 = (1 << 64) - 1
HASH_RANGE = float(1 << 64)
TFIDF_MAX_FEATURES = 1 << 20


@dataclass
class FeatureMatrix:
    """Dense or CSR feature block with one provenance name per column."""

    values: np.ndarray | sp.csr_matrix
    col_names: list[str]

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("feature values must be 2-D")
        if len(self.col_names) != self.values.shape[1]:
            raise ValueError(
                f"{len(self.col_names)} column names for {self.values.shape[1]} columns"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.values)

    def dense(self) -> np.ndarray:
        return self.values.toarray() if self.is_sparse else np.asarray(self.values)

    @staticmethod
    def hstack(blocks: Sequence["FeatureMatrix"], n_rows: int) -> "FeatureMatrix":
        if not blocks:
            return FeatureMatrix(np.zeros((n_rows, 0)), [])
        values = np.hstack([b.dense() for b in blocks])
        return FeatureMatrix(values, [n for b in blocks for n in b.col_names])


# ---------------------------------------------------------------------------
# MinHash
# ---------------------------------------------------------------------------


def fmix64(h: np.ndarray) -> np.ndarray:
    """MurmurHash3 64-bit finalizer, elementwise on uint64 arrays."""
    h = np.array(h, dtype=np.uint64, copy=True)
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xC4CEB9FE1A85EC53)
    h ^= h >> np.uint64(33)
    return h


def gram_hash(gram: str) -> int:
    return int.from_bytes(hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest(), "little")


@dataclass(frozen=True)
class MinHashParams:
    dim: int = 30
    n_min: int = 2
    n_max: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("MinHash dimension must be >= 1")


class MinHashEncoder:
    """k seeded 64-bit hashes over character n-gram sets; stateless given params.

    Hash ``j`` of n-gram ``g`` is ``fmix64(blake2b64(g) ^ fmix64(seed + j))``.
    Signatures are the per-hash minima, scaled to [0, 1] by the hash range;
    strings without n-grams get the sentinel 1.0 in every component.
    """

    def __init__(self, params: MinHashParams = MinHashParams()):
        self.params = params
        seeds = (np.arange(params.dim, dtype=np.uint64) + np.uint64(params.seed & MASK64))
        self._salts = fmix64(seeds)
        self._cache: dict[str, np.ndarray] = {}

    def signature(self, value: str) -> np.ndarray:
        """Raw uint64 signature (all ones when the string has no n-grams)."""
        sig = self._cache.get(value)
        if sig is not None:
            return sig
        grams = char_ngrams(value, self.params.n_min, self.params.n_max)
        if not grams:
            sig = np.full(self.params.dim, MASK64, dtype=np.uint64)
        else:
            base = np.fromiter((gram_hash(g) for g in grams), dtype=np.uint64, count=len(grams))
            sig = fmix64(base[:, None] ^ self._salts[None, :]).min(axis=0)
        self._cache[value] = sig
        return sig

    def signatures(self, values: Sequence[str]) -> np.ndarray:
        out = np.empty((len(values), self.params.dim), dtype=np.uint64)
        for i, v in enumerate(values):
            out[i] = self.signature(v)
        return out

    def transform(self, values: Sequence[str], prefix: str = "minhash") -> FeatureMatrix:
        sig = self.signatures(values)
        return FeatureMatrix(sig.astype(np.float64) / HASH_RANGE,
                             [f"{prefix}_{j}" for j in range(self.params.dim)])

    def to_json(self) -> dict:
        p = self.params
        return envelope("minhash", {"dim": p.dim, "n_min": p.n_min, "n_max": p.n_max, "seed": p.seed})

    @classmethod
    def from_json(cls, doc: dict) -> "MinHashEncoder":
        return cls(MinHashParams(**open_envelope(doc, "minhash")))


def minhash_encode(values: Sequence[str], params: MinHashParams = MinHashParams()) -> FeatureMatrix:
    return MinHashEncoder(params).transform(values)


def estimate_jaccard(sig_a: np.ndarray, sig_b: np.ndarray) -> float:
    return float(np.mean(np.asarray(sig_a) == np.asarray(sig_b)))


# ---------------------------------------------------------------------------
# TF-IDF on character n-grams
# ---------------------------------------------------------------------------


def _ngram_counts(s: str, n_min: int, n_max: int) -> Counter:
    s = s.lower()
    L = len(s)
    return Counter(s[i : i + n] for n in range(n_min, min(n_max, L) + 1) for i in range(L - n + 1))


@dataclass
class TfidfModel:
    vocabulary: dict[str, int]
    idf: np.ndarray
    ngram_range: tuple[int, int] = (2, 3)

    @classmethod
    def fit(cls, values: Sequence[str], ngram_range: tuple[int, int] = (2, 3),
            max_features: int = TFIDF_MAX_FEATURES) -> "TfidfModel":
        if not any(v for v in values):
            raise ValueError("TF-IDF needs at least one non-empty string")
        lo, hi = ngram_range
        df: Counter = Counter()
        for v in values:
            df.update(_ngram_counts(v, lo, hi).keys())
        if not df:
            raise ValueError("TF-IDF corpus produced an empty vocabulary")
        terms = sorted(df)
        if len(terms) <= max_features:
            vocab = {t: j for j, t in enumerate(terms)}
            n_cols = len(terms)
        else:
            vocab = {t: gram_hash(t) % max_features for t in terms}
            n_cols = max_features
        col_df = np.zeros(n_cols)
        # bucketed columns: a document counts once per column
        for v in values:
            cols = {vocab[t] for t in _ngram_counts(v, lo, hi)}
            col_df[list(cols)] += 1
        N = len(values)
        idf = np.log((1.0 + N) / (1.0 + col_df)) + 1.0
        return cls(vocab, idf, (lo, hi))

    @property
    def n_features(self) -> int:
        return len(self.idf)

    def transform(self, values: Sequence[str], prefix: str = "tfidf") -> FeatureMatrix:
        lo, hi = self.ngram_range
        indptr, indices, data = [0], [], []
        for v in values:
            row: dict[int, float] = {}
            for t, c in _ngram_counts(v, lo, hi).items():
                j = self.vocabulary.get(t)
                if j is not None:
                    row[j] = row.get(j, 0.0) + c
            cols = sorted(row)
            w = np.array([row[j] * self.idf[j] for j in cols])
            norm = math.sqrt(float(w @ w)) if len(w) else 0.0
            if norm > 0:
                w = w / norm
            indices.extend(cols)
            data.extend(w.tolist())
            indptr.append(len(indices))
        X = sp.csr_matrix((np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64),
                           np.asarray(indptr, dtype=np.int64)), shape=(len(values), self.n_features))
        return FeatureMatrix(X, [f"{prefix}_{j}" for j in range(self.n_features)])

    def to_json(self) -> dict:
        return envelope("tfidf", {
            "vocabulary": self.vocabulary,
            "idf": self.idf.tolist(),
            "ngram_range": list(self.ngram_range),
        })

    @classmethod
    def from_json(cls, doc: dict) -> "TfidfModel":
        st = open_envelope(doc, "tfidf")
        return cls(dict(st["vocabulary"]), np.asarray(st["idf"], dtype=np.float64),
                   tuple(st["ngram_range"]))


def tfidf_fit_transform(values: Sequence[str], ngram_range: tuple[int, int] = (2, 3)):
    model = TfidfModel.fit(values, ngram_range)
    return model, model.transform(values)


# ---------------------------------------------------------------------------
# one-hot, datetime, scaling
# ---------------------------------------------------------------------------


@dataclass
class OneHotEncoder:
    categories: list[str] = field(default_factory=list)

    @classmethod
    def fit(cls, values: Sequence[str]) -> "OneHotEncoder":
        return cls(list(dict.fromkeys(values)))

    def transform(self, values: Sequence[str], prefix: str = "onehot") -> FeatureMatrix:
        index = {c: j for j, c in enumerate(self.categories)}
        out = np.zeros((len(values), len(self.categories)))
        for i, v in enumerate(values):
            j = index.get(v)
            if j is not None:
                out[i, j] = 1.0
        return FeatureMatrix(out, [f"{prefix}={c}" for c in self.categories])

    def to_json(self) -> dict:
        return envelope("onehot", {"categories": self.categories})

    @classmethod
    def from_json(cls, doc: dict) -> "OneHotEncoder":
        return cls(list(open_envelope(doc, "onehot")["categories"]))


def onehot_encode(train_values: Sequence[str], apply_values: Sequence[str]) -> FeatureMatrix:
    return OneHotEncoder.fit(train_values).transform(apply_values)


DATETIME_FIELDS = ("year", "month", "day", "weekday", "hour")


def datetime_encode(values: Sequence[str], prefix: str = "dt") -> FeatureMatrix:
    """Expand timestamps to year, month, day, weekday (Monday=0) and hour.

    Unparseable cells become rows of NaN for downstream imputation.
    """
    out = np.full((len(values), len(DATETIME_FIELDS)), np.nan)
    for i, v in enumerate(values):
        dt = parse_datetime(v) if isinstance(v, str) else v
        if dt is not None:
            out[i] = (dt.year, dt.month, dt.day, dt.weekday(), getattr(dt, "hour", 0))
    return FeatureMatrix(out, [f"{prefix}_{f}" for f in DATETIME_FIELDS])


@dataclass
class MeanImputer:
    means: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "MeanImputer":
        X = np.asarray(X, dtype=np.float64)
        finite = np.isfinite(X)
        counts = finite.sum(axis=0)
        sums = np.where(finite, X, 0.0).sum(axis=0)
        means = np.divide(sums, counts, out=np.zeros(X.shape[1]), where=counts > 0)
        return cls(means)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=np.float64, copy=True)
        bad = ~np.isfinite(X)
        X[bad] = np.broadcast_to(self.means, X.shape)[bad]
        return X


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        return cls(X.mean(axis=0), X.std(axis=0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        centered = X - self.mean
        out = np.zeros_like(centered)
        nz = self.scale > 0
        out[:, nz] = centered[:, nz] / self.scale[nz]
        return out

    def to_json(self) -> dict:
        return envelope("standardizer", {"mean": self.mean.tolist(), "scale": self.scale.tolist()})

    @classmethod
    def from_json(cls, doc: dict) -> "Standardizer":
        st = open_envelope(doc, "standardizer")
        return cls(np.asarray(st["mean"], dtype=np.float64), np.asarray(st["scale"], dtype=np.float64))


def standardize(train: FeatureMatrix, apply: FeatureMatrix) -> FeatureMatrix:
    if train.shape[1] != apply.shape[1]:
        raise ValueError("train and apply widths differ")
    scaler = Standardizer.fit(train.dense())
    return FeatureMatrix(scaler.transform(apply.dense()), list(apply.col_names))
