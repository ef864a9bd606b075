"""Pipeline configuration with a versioned JSON form."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .embeddings import BackendConfig
from .encoders import MinHashParams
from .learners.gbdt import GbdtParams

CONFIG_SCHEMA_VERSION = 1
POLICIES = ("auto", "minhash", "tfidf", "embedding")
SETTINGS = ("text+numeric", "text-only")


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    regime_threshold: int = 3000
    profile_sample: int = 1000
    profile_ngram_range: tuple[int, int] = (2, 4)
    pca_dim: int = 30
    minhash: MinHashParams = field(default_factory=MinHashParams)
    tfidf_ngram_range: tuple[int, int] = (2, 3)
    text_encoder_policy: str = "auto"
    column_policies: dict[str, str] = field(default_factory=dict)
    backend: BackendConfig = field(default_factory=BackendConfig)
    cache_path: str | None = None
    learner: GbdtParams = field(default_factory=GbdtParams)
    folds: int = 7
    seed: int = 0
    train_sizes: list[int] = field(default_factory=lambda: [1000])

    def __post_init__(self):
        for p in [self.text_encoder_policy, *self.column_policies.values()]:
            if p not in POLICIES:
                raise ConfigError(f"unknown text encoder policy {p!r}; expected one of {POLICIES}")
        if self.pca_dim < 1:
            raise ConfigError("pca_dim must be >= 1")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")

    def to_json(self) -> dict:
        d = asdict(self)
        d["backend"] = self.backend.to_dict()
        d["profile_ngram_range"] = list(self.profile_ngram_range)
        d["tfidf_ngram_range"] = list(self.tfidf_ngram_range)
        return {"schema_version": CONFIG_SCHEMA_VERSION, **d}

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        doc = dict(doc)
        version = doc.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version!r}")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "minhash" in doc:
                doc["minhash"] = MinHashParams(**doc["minhash"])
            if "backend" in doc:
                doc["backend"] = BackendConfig(**doc["backend"])
            if "learner" in doc:
                doc["learner"] = GbdtParams(**doc["learner"])
            for key in ("profile_ngram_range", "tfidf_ngram_range"):
                if key in doc:
                    doc[key] = tuple(doc[key])
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(doc)

    def with_overrides(self, **kw) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})
