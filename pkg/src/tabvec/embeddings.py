"""Embedding backends (HTTP, precomputed file, mock) and a persistent vector cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .encoders import FeatureMatrix, gram_hash
from .ngrams import char_ngrams

log = logging.getLogger(__name__)

API_KEY_ENV = "TABVEC_API_KEY"
RETRY_STATUS = {429, 500, 502, 503, 504}


class EmbeddingError(RuntimeError):
    pass


class CacheIntegrityError(EmbeddingError):
    pass


@dataclass
class BackendConfig:
    kind: str = "mock"  # "http" | "file" | "mock"
    model_id: str = "mock-ngram"
    endpoint: str = ""
    api_key: str | None = None
    batch_size: int = 128
    max_retries: int = 5
    concurrency: int = 4
    dim: int = 256
    path: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.kind not in ("http", "file", "mock"):
            raise ValueError(f"unknown backend kind {self.kind!r}")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.pop("api_key")  # secrets stay out of reports
        return d


# ---------------------------------------------------------------------------
# cache journal
# ---------------------------------------------------------------------------


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _record_crc(model_id: str, chash: str, dim: int, vector: list[float]) -> int:
    payload = json.dumps([model_id, chash, dim, vector], separators=(",", ":"))
    return zlib.crc32(payload.encode("utf-8"))


@dataclass(frozen=True)
class EmbeddingCacheEntry:
    model_id: str
    content_hash: str
    vector: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.vector)

    def to_line(self) -> bytes:
        vec = [float(v) for v in self.vector]
        rec = {
            "model_id": self.model_id,
            "content_hash": self.content_hash,
            "dim": len(vec),
            "vector": vec,
            "crc": _record_crc(self.model_id, self.content_hash, len(vec), vec),
        }
        return (json.dumps(rec, separators=(",", ":")) + "\n").encode("utf-8")


class EmbeddingCache:
    """Append-only JSON-lines journal keyed on ``(model_id, sha256(text))``.

    On open, a trailing record without its newline is a torn write: it is
    discarded and the file truncated back to the last complete record. Any
    complete record that fails to parse or checksum raises
    :class:`CacheIntegrityError`. Later records win over earlier ones.
    """

    def __init__(self, path, fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self._index: dict[tuple[str, str], np.ndarray] = {}
        self._lock = threading.Lock()
        self._recover()
        self._fh = open(self.path, "ab")

    def _recover(self) -> None:
        if not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch()
            return
        raw = self.path.read_bytes()
        end = raw.rfind(b"\n") + 1
        if end < len(raw):
            log.warning("discarding torn trailing record in %s (%d bytes)", self.path, len(raw) - end)
            with open(self.path, "r+b") as fh:
                fh.truncate(end)
        for lineno, line in enumerate(raw[:end].split(b"\n"), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                vec = [float(v) for v in rec["vector"]]
                ok = (rec["dim"] == len(vec)
                      and rec["crc"] == _record_crc(rec["model_id"], rec["content_hash"], rec["dim"], vec))
            except (ValueError, KeyError, TypeError) as exc:
                raise CacheIntegrityError(f"{self.path}:{lineno}: unreadable record ({exc})") from exc
            if not ok:
                raise CacheIntegrityError(f"{self.path}:{lineno}: checksum mismatch")
            self._index[(rec["model_id"], rec["content_hash"])] = np.asarray(vec, dtype=np.float64)

    def __len__(self) -> int:
        return len(self._index)

    def get(self, model_id: str, text: str) -> np.ndarray | None:
        return self.get_hashed(model_id, content_hash(text))

    def get_hashed(self, model_id: str, chash: str) -> np.ndarray | None:
        return self._index.get((model_id, chash))

    def put(self, entry: EmbeddingCacheEntry) -> None:
        self.put_many([entry])

    def put_many(self, entries: Sequence[EmbeddingCacheEntry]) -> None:
        if not entries:
            return
        with self._lock:
            self._fh.write(b"".join(e.to_line() for e in entries))
            self._fh.flush()
            if self.fsync:
                os.fsync(self._fh.fileno())
            for e in entries:
                self._index[(e.model_id, e.content_hash)] = np.asarray(e.vector, dtype=np.float64)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def cache_open(path, fsync: bool = True) -> EmbeddingCache:
    return EmbeddingCache(path, fsync=fsync)


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------


@lru_cache(maxsize=1 << 16)
def _gram_vector(gram: str, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed & 0xFFFFFFFF, gram_hash(gram)])
    v = rng.standard_normal(dim)
    v.flags.writeable = False
    return v


def mock_embed(text: str, dim: int = 256, seed: int = 0) -> np.ndarray:
    """Deterministic stand-in for a language-model embedding.

    Sums a fixed Gaussian vector per character 2-4-gram and L2-normalizes,
    so texts sharing n-grams get correlated vectors. Texts without n-grams
    hash the whole string instead.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    grams = sorted(char_ngrams(text, 2, 4)) or ["\x00" + text]
    v = np.sum([_gram_vector(g, dim, seed) for g in grams], axis=0)
    return v / np.linalg.norm(v)


class MockBackend:
    def __init__(self, dim: int = 256, seed: int = 0, model_id: str = "mock-ngram"):
        self.dim, self.seed = dim, seed
        self.model_id = f"{model_id}/d{dim}/s{seed}"
        self.calls = 0
        self.texts_embedded = 0

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        self.calls += 1
        self.texts_embedded += len(texts)
        return np.vstack([mock_embed(t, self.dim, self.seed) for t in texts])


class FileBackend:
    """Vectors looked up from a JSON-lines file of ``{"text": ..., "vector": [...]}``."""

    def __init__(self, path, model_id: str | None = None, dim: int | None = None):
        self.path = Path(path)
        self.model_id = model_id or f"file:{self.path.name}"
        self.calls = 0
        self.texts_embedded = 0
        self._vectors: dict[str, np.ndarray] = {}
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                vec = np.asarray(rec["vector"], dtype=np.float64)
                if dim is not None and len(vec) != dim:
                    raise EmbeddingError(f"{self.path}:{lineno}: dimension {len(vec)} != {dim}")
                self._vectors[rec["text"]] = vec
        dims = {len(v) for v in self._vectors.values()}
        if len(dims) > 1:
            raise EmbeddingError(f"{self.path}: mixed vector dimensions {sorted(dims)}")

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        self.calls += 1
        self.texts_embedded += len(texts)
        missing = [t for t in texts if t not in self._vectors]
        if missing:
            raise EmbeddingError(f"{len(missing)} texts missing from {self.path}, first: {missing[0]!r}")
        return np.vstack([self._vectors[t] for t in texts])


def write_vector_file(path, items) -> None:
    """Write ``(text, vector)`` pairs in the File backend format."""
    with open(path, "w", encoding="utf-8") as fh:
        for text, vec in items:
            fh.write(json.dumps({"text": text, "vector": [float(x) for x in vec]}) + "\n")


class HttpBackend:
    """OpenAI-compatible ``/v1/embeddings`` client with batching and retries."""

    def __init__(self, endpoint: str, model_id: str, api_key: str | None = None,
                 batch_size: int = 128, max_retries: int = 5, concurrency: int = 4,
                 client=None, sleep: Callable[[float], None] = time.sleep, timeout: float = 60.0):
        import httpx

        self.url = endpoint.rstrip("/") + "/v1/embeddings"
        self.model_id = model_id
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.concurrency = max(1, concurrency)
        self.client = client or httpx.Client(timeout=timeout)
        self.sleep = sleep
        self.calls = 0
        self.texts_embedded = 0
        self._lock = threading.Lock()

    def _post(self, batch: list[str]) -> list[list[float]]:
        import httpx

        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        body = {"model": self.model_id, "input": batch}
        delay = 1.0
        for attempt in range(self.max_retries + 1):
            with self._lock:
                self.calls += 1
            try:
                resp = self.client.post(self.url, json=body, headers=headers)
            except httpx.TransportError as exc:
                err = f"transport error: {exc}"
            else:
                if resp.status_code == 200:
                    data = resp.json()["data"]
                    if len(data) != len(batch):
                        raise EmbeddingError(f"expected {len(batch)} embeddings, got {len(data)}")
                    return [d["embedding"] for d in data]
                if resp.status_code not in RETRY_STATUS:
                    raise EmbeddingError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                err = f"HTTP {resp.status_code}"
            if attempt < self.max_retries:
                log.warning("embedding request failed (%s); retrying in %.0fs", err, delay)
                self.sleep(delay)
                delay *= 2
        raise EmbeddingError(f"backend unreachable after {self.max_retries} retries: {err}")

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        batches = [texts[i : i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        with self._lock:
            self.texts_embedded += len(texts)
        if len(batches) == 1 or self.concurrency == 1:
            results = [self._post(b) for b in batches]
        else:
            with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
                results = list(pool.map(self._post, batches))
        vecs = [v for r in results for v in r]
        dims = {len(v) for v in vecs}
        if len(dims) != 1:
            raise EmbeddingError(f"inconsistent embedding dimensions {sorted(dims)}")
        return np.asarray(vecs, dtype=np.float64)


def make_backend(config: BackendConfig, client=None):
    if config.kind == "mock":
        return MockBackend(config.dim, config.seed, config.model_id)
    if config.kind == "file":
        if not config.path:
            raise ValueError("file backend needs a path")
        return FileBackend(config.path, config.model_id or None)
    if not config.endpoint:
        raise ValueError("http backend needs an endpoint")
    return HttpBackend(config.endpoint, config.model_id, config.api_key, config.batch_size,
                       config.max_retries, config.concurrency, client=client)


@dataclass
class Embedder:
    """A backend paired with an optional cache; the unit the pipeline consumes."""

    backend: object
    cache: EmbeddingCache | None = None

    @property
    def model_id(self) -> str:
        return self.backend.model_id

    def embed(self, texts: Sequence[str]) -> FeatureMatrix:
        return embed_batch(texts, self.backend, self.cache)


def embed_batch(texts: Sequence[str], backend, cache: EmbeddingCache | None = None) -> FeatureMatrix:
    """Embed ``texts`` row-wise, deduplicating and consulting the cache first.

    All cache misses go to the backend in a single ``embed`` call; the HTTP
    backend splits that into ``batch_size`` requests itself.
    """
    if len(texts) == 0:
        raise ValueError("no texts to embed")
    unique = list(dict.fromkeys(texts))
    found: dict[str, np.ndarray] = {}
    misses = []
    for t in unique:
        v = cache.get(backend.model_id, t) if cache is not None else None
        if v is None:
            misses.append(t)
        else:
            found[t] = v
    if misses:
        vecs = np.asarray(backend.embed(misses), dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[0] != len(misses):
            raise EmbeddingError(f"backend returned {vecs.shape[0]} vectors for {len(misses)} texts")
        if cache is not None:
            cache.put_many([EmbeddingCacheEntry(backend.model_id, content_hash(t), tuple(v.tolist()))
                            for t, v in zip(misses, vecs)])
        found.update(zip(misses, vecs))
    dims = {len(v) for v in found.values()}
    if len(dims) != 1:
        raise EmbeddingError(f"inconsistent embedding dimensions {sorted(dims)}")
    dim = dims.pop()
    X = np.vstack([found[t] for t in texts])
    return FeatureMatrix(X, [f"emb_{j}" for j in range(dim)])
