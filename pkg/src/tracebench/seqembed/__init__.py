"""Sequence-based encoders: static token tables, transformer, aggregation."""

from .tables import TokenEmbeddingTable, glove_weight, train_cbow, train_glove
from .transformer import (
    TransformerConfig,
    TransformerEncoder,
    pretrain_transformer_mlm,
    train_simcse,
)
from .aggregate import (
    STATIC_STRATEGIES,
    TRANSFORMER_STRATEGIES,
    TfidfStats,
    aggregate,
    build_tfidf_stats,
    embed_sequences,
)

__all__ = [
    "TokenEmbeddingTable",
    "train_cbow",
    "train_glove",
    "glove_weight",
    "TransformerConfig",
    "TransformerEncoder",
    "pretrain_transformer_mlm",
    "train_simcse",
    "TfidfStats",
    "build_tfidf_stats",
    "aggregate",
    "embed_sequences",
    "STATIC_STRATEGIES",
    "TRANSFORMER_STRATEGIES",
]
