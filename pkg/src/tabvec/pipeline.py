"""Column routing into one feature matrix, and the models built on top of it."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .embeddings import Embedder, cache_open, make_backend
from .encoders import (
    FeatureMatrix,
    MeanImputer,
    MinHashEncoder,
    OneHotEncoder,
    Standardizer,
    TfidfModel,
    datetime_encode,
)
from .learners.ensemble import out_of_fold_probs, stacking_ensemble, voting_ensemble
from .learners.gbdt import gbdt_fit
from .learners.linear import logreg_fit
from .ngrams import NgramProfile, Regime, profile_column
from .pca import pca_fit
from .table import ColumnKind, Table, infer_column_kinds, parse_number

log = logging.getLogger(__name__)


def make_embedder(config: PipelineConfig) -> Embedder:
    cache = cache_open(config.cache_path) if config.cache_path else None
    return Embedder(make_backend(config.backend), cache)


class _NumericBlock:
    def __init__(self, header: str, datetime: bool = False):
        self.header, self.datetime = header, datetime

    def _raw(self, values) -> FeatureMatrix:
        if self.datetime:
            return datetime_encode(values, prefix=self.header)
        nums = [parse_number(c) for c in values]
        col = np.array([np.nan if v is None else v for v in nums], dtype=np.float64)
        return FeatureMatrix(col.reshape(len(values), 1), [self.header])

    def fit(self, values):
        raw = self._raw(values)
        self.imputer = MeanImputer.fit(raw.values)
        self.scaler = Standardizer.fit(self.imputer.transform(raw.values))
        return self

    def transform(self, values) -> FeatureMatrix:
        raw = self._raw(values)
        return FeatureMatrix(self.scaler.transform(self.imputer.transform(raw.values)), raw.col_names)


class _OneHotBlock:
    def __init__(self, header: str):
        self.header = header

    def fit(self, values):
        self.enc = OneHotEncoder.fit(values)
        return self

    def transform(self, values) -> FeatureMatrix:
        return self.enc.transform(values, prefix=self.header)


class _MinHashBlock:
    def __init__(self, header: str, config: PipelineConfig):
        self.header = header
        self.enc = MinHashEncoder(config.minhash)

    def fit(self, values):
        return self

    def transform(self, values) -> FeatureMatrix:
        return self.enc.transform(values, prefix=f"{self.header}:minhash")


class _TfidfBlock:
    """Character TF-IDF reduced by PCA, handled like an embedding."""

    def __init__(self, header: str, config: PipelineConfig):
        self.header, self.config = header, config

    def fit(self, values):
        self.model = TfidfModel.fit(values, self.config.tfidf_ngram_range)
        self.pca = pca_fit(self.model.transform(values).values, self.config.pca_dim)
        return self

    def transform(self, values) -> FeatureMatrix:
        Z = self.pca.transform(self.model.transform(values).values)
        return FeatureMatrix(Z, [f"{self.header}:tfidf_pc{j}" for j in range(Z.shape[1])])


class _EmbeddingBlock:
    def __init__(self, header: str, config: PipelineConfig, embedder: Embedder, reduce: bool = True):
        self.header, self.config, self.embedder, self.reduce = header, config, embedder, reduce

    def fit(self, values):
        if self.reduce:
            self.pca = pca_fit(self.embedder.embed(values).values, self.config.pca_dim)
        return self

    def transform(self, values) -> FeatureMatrix:
        E = self.embedder.embed(values)
        if not self.reduce:
            return FeatureMatrix(E.values, [f"{self.header}:{n}" for n in E.col_names])
        Z = self.pca.transform(E.values)
        return FeatureMatrix(Z, [f"{self.header}:emb_pc{j}" for j in range(Z.shape[1])])


@dataclass
class ColumnRoute:
    header: str
    kind: ColumnKind
    encoder: str
    profile: NgramProfile | None = None

    def to_dict(self) -> dict:
        return {"header": self.header, "kind": self.kind.value, "encoder": self.encoder,
                "profile": self.profile.to_dict() if self.profile else None}


class TableVectorizer:
    """Fit-on-train column router.

    Numeric and datetime columns are imputed and standardized, low-cardinality
    columns one-hot encoded, mid-cardinality ones MinHashed, and text columns
    follow the text policy. ``auto`` profiles the training column: dirty
    columns get MinHash, diverse ones an embedding reduced by PCA.
    ``setting="text-only"`` keeps the text columns only.
    """

    def __init__(self, config: PipelineConfig = PipelineConfig(), embedder: Embedder | None = None,
                 setting: str = "text+numeric", reduce_embeddings: bool = True):
        self.config = config
        self.embedder = embedder
        self.setting = setting
        self.reduce_embeddings = reduce_embeddings

    def _text_encoder(self, header: str, values) -> tuple[str, NgramProfile | None]:
        policy = self.config.column_policies.get(header, self.config.text_encoder_policy)
        if policy != "auto":
            return policy, None
        lo, hi = self.config.profile_ngram_range
        prof = profile_column(values, self.config.profile_sample, lo, hi, self.config.seed,
                              header, self.config.regime_threshold)
        return ("minhash" if prof.regime is Regime.DIRTY else "embedding"), prof

    def fit(self, train: Table) -> "TableVectorizer":
        self.routes: list[ColumnRoute] = []
        self.blocks = []
        for header, kind in infer_column_kinds(train):
            if self.setting == "text-only" and kind is not ColumnKind.TEXT:
                continue
            values = train.column(header)
            profile = None
            if kind is ColumnKind.NUMERIC:
                name, block = "standardize", _NumericBlock(header)
            elif kind is ColumnKind.DATETIME:
                name, block = "datetime", _NumericBlock(header, datetime=True)
            elif kind is ColumnKind.LOW_CARD:
                name, block = "onehot", _OneHotBlock(header)
            elif kind is ColumnKind.MID_CARD:
                name, block = "minhash", _MinHashBlock(header, self.config)
            else:
                name, profile = self._text_encoder(header, values)
                if name == "minhash":
                    block = _MinHashBlock(header, self.config)
                elif name == "tfidf":
                    block = _TfidfBlock(header, self.config)
                else:
                    if self.embedder is None:
                        raise ValueError(f"column {header!r} routed to embeddings but no embedder given")
                    block = _EmbeddingBlock(header, self.config, self.embedder, self.reduce_embeddings)
            self.routes.append(ColumnRoute(header, kind, name, profile))
            self.blocks.append(block.fit(values))
        return self

    def transform(self, table: Table, only: set[str] | None = None) -> FeatureMatrix:
        parts = [
            b.transform(table.column(r.header))
            for r, b in zip(self.routes, self.blocks)
            if only is None or r.encoder in only
        ]
        return FeatureMatrix.hstack(parts, table.n_rows)

    def fit_transform(self, train: Table) -> FeatureMatrix:
        return self.fit(train).transform(train)


def vectorize_table(train: Table, apply: Table, config: PipelineConfig = PipelineConfig(),
                    embedder: Embedder | None = None, setting: str = "text+numeric") -> FeatureMatrix:
    return TableVectorizer(config, embedder, setting).fit(train).transform(apply)


class TabularModel:
    """Vectorizer plus learner; the unit cross-validation fits per fold.

    ``learner`` is ``gbdt`` (the default pipeline), or ``voting``/``stacking``:
    GBDT on non-embedding features ensembled with a logistic regression on
    the unreduced embeddings.
    """

    def __init__(self, config: PipelineConfig, embedder: Embedder | None = None,
                 setting: str = "text+numeric", learner: str = "gbdt", l2: float = 1e-2):
        if learner not in ("gbdt", "voting", "stacking"):
            raise ValueError(f"unknown learner {learner!r}")
        self.config, self.embedder, self.setting = config, embedder, setting
        self.learner, self.l2 = learner, l2

    def fit(self, table: Table, y) -> "TabularModel":
        y = np.asarray(y)
        reduce = self.learner == "gbdt"
        self.vec = TableVectorizer(self.config, self.embedder, self.setting, reduce).fit(table)
        if self.learner == "gbdt":
            self.model = gbdt_fit(self.vec.transform(table).values, y, self.config.learner)
            return self
        Xn, Xe = self._split(table)
        self.y_train = y
        self.gb = gbdt_fit(Xn, y, self.config.learner) if Xn.shape[1] else None
        self.lr = logreg_fit(Xe, y, self.l2) if Xe.shape[1] else None
        if self.learner == "stacking" and self.gb is not None and self.lr is not None:
            seed, params = self.config.seed, self.config.learner
            self.oof = np.column_stack([
                out_of_fold_probs(lambda tr, te: gbdt_fit(Xn[tr], y[tr], params).predict_proba(Xn[te]),
                                  len(y), y, 5, seed),
                out_of_fold_probs(lambda tr, te: logreg_fit(Xe[tr], y[tr], self.l2).predict_proba(Xe[te]),
                                  len(y), y, 5, seed),
            ])
        return self

    def _split(self, table: Table):
        non_emb = {"standardize", "datetime", "onehot", "minhash", "tfidf"}
        return (self.vec.transform(table, only=non_emb).values,
                self.vec.transform(table, only={"embedding"}).values)

    def predict_proba(self, table: Table) -> np.ndarray:
        if self.learner == "gbdt":
            return self.model.predict_proba(self.vec.transform(table).values)
        Xn, Xe = self._split(table)
        members = []
        if self.gb is not None:
            members.append(self.gb.predict_proba(Xn))
        if self.lr is not None:
            members.append(self.lr.predict_proba(Xe))
        if self.learner == "voting" or len(members) == 1:
            return voting_ensemble(members)
        return stacking_ensemble(self.oof, self.y_train, np.column_stack(members))
