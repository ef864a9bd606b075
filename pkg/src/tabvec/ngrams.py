"""Character n-gram extraction and per-column diversity profiling."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

DEFAULT_SAMPLE = 1000
DEFAULT_THRESHOLD = 3000


class Regime(str, enum.Enum):
    DIRTY = "Dirty"
    DIVERSE = "Diverse"


def char_ngrams(s: str, n_min: int = 2, n_max: int = 4) -> set[str]:
    """All contiguous substrings of ``s.lower()`` with length in ``[n_min, n_max]``.

    Whitespace is kept. Python strings index code points, so multi-byte
    characters count as one.
    """
    if not 1 <= n_min <= n_max:
        raise ValueError(f"invalid n-gram range ({n_min}, {n_max})")
    s = s.lower()
    L = len(s)
    return {s[i : i + n] for n in range(n_min, min(n_max, L) + 1) for i in range(L - n + 1)}


@dataclass(frozen=True)
class NgramProfile:
    column: str
    sample_size: int
    n_min: int
    n_max: int
    unique_ngrams: int
    regime: Regime

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value
        return d


def classify_regime(unique_ngrams: int, threshold: int = DEFAULT_THRESHOLD) -> Regime:
    return Regime.DIRTY if unique_ngrams <= threshold else Regime.DIVERSE


def sample_rows(n: int, sample_n: int, seed: int) -> np.ndarray:
    if n <= sample_n:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=sample_n, replace=False))


def count_unique_ngrams(values: Sequence[str], n_min: int = 2, n_max: int = 4) -> int:
    seen: set[str] = set()
    # one set per distinct value is enough: duplicates add nothing
    for v in set(values):
        seen |= char_ngrams(v, n_min, n_max)
    return len(seen)


def profile_column(
    values: Sequence[str],
    sample_n: int = DEFAULT_SAMPLE,
    n_min: int = 2,
    n_max: int = 4,
    seed: int = 0,
    column: str = "",
    threshold: int = DEFAULT_THRESHOLD,
) -> NgramProfile:
    """Count unique n-grams over a seeded sample of at most ``sample_n`` rows."""
    if len(values) == 0:
        raise ValueError("cannot profile an empty column")
    idx = sample_rows(len(values), sample_n, seed)
    count = count_unique_ngrams([values[i] for i in idx], n_min, n_max)
    return NgramProfile(column, len(idx), n_min, n_max, count, classify_regime(count, threshold))


def profile_table(table, seed: int = 0, sample_n: int = DEFAULT_SAMPLE, n_min: int = 2,
                  n_max: int = 4, threshold: int = DEFAULT_THRESHOLD, headers=None) -> list[NgramProfile]:
    headers = table.headers if headers is None else headers
    return [
        profile_column(table.column(h), sample_n, n_min, n_max, seed, h, threshold)
        for h in headers
    ]
