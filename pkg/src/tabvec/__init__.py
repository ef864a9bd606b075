"""Vectorize string columns of tables: n-gram diversity profiling, MinHash and
TF-IDF sketches, language-model embeddings, and the analytics and fuzzy-join
pipelines built on them."""

from .config import PipelineConfig
from .embeddings import BackendConfig, Embedder, EmbeddingCache, embed_batch, mock_embed
from .encoders import (
    FeatureMatrix,
    MinHashEncoder,
    MinHashParams,
    TfidfModel,
    datetime_encode,
    minhash_encode,
    onehot_encode,
    standardize,
    tfidf_fit_transform,
)
from .join import JoinResult, JoinSpec, evaluate_join, join, sweep_thresholds
from .ngrams import NgramProfile, Regime, char_ngrams, classify_regime, profile_column
from .pca import PcaModel, pca_fit, pca_transform
from .pipeline import TableVectorizer, TabularModel, vectorize_table
from .table import ColumnKind, SupervisedDataset, Table, binarize_and_balance, infer_column_kinds, load_csv

__version__ = "0.1.0"
