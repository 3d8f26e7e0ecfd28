"""Per-trace aggregation of token vectors and transformer states."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import autodiff as ad
from ..abstraction import TokenSequence
from ..core import Embedding, Vocabulary
from ..errors import InvalidConfig, InvalidInput
from .tables import TokenEmbeddingTable
from .transformer import TransformerEncoder

STATIC_STRATEGIES = ("avg", "concat", "tfidf_avg", "concat_avg")
TRANSFORMER_STRATEGIES = ("avg", "layer_concat", "cls")


@dataclass
class TfidfStats:
    """Document frequencies over a corpus, aligned to vocabulary ids."""

    df: np.ndarray
    n_docs: int

    def idf(self, token_id: int) -> float:
        d = max(float(self.df[token_id]), 1.0)
        return float(np.log(self.n_docs / d) + 1.0)


def build_tfidf_stats(sequences: Sequence[TokenSequence], vocab: Vocabulary) -> TfidfStats:
    if not sequences:
        raise InvalidInput("no sequences supplied")
    df = np.zeros(len(vocab), dtype=np.float64)
    for seq in sequences:
        for tid in set(seq.tokens):
            df[tid] += 1.0
    return TfidfStats(df=df, n_docs=len(sequences))


def _static_vector(
    tokens: tuple[int, ...],
    table: TokenEmbeddingTable,
    strategy: str,
    max_len: int,
    tfidf: TfidfStats | None,
) -> np.ndarray:
    M = table.matrix
    d = table.dim
    if strategy == "avg":
        return M[list(tokens)].mean(axis=0)
    if strategy == "concat":
        out = np.zeros(d * max_len, dtype=np.float64)
        kept = tokens[:max_len]
        for i, tid in enumerate(kept):
            out[i * d : (i + 1) * d] = M[tid]
        return out
    if strategy == "tfidf_avg":
        if tfidf is None:
            raise InvalidConfig("tfidf_avg requires corpus tf-idf statistics")
        counts = Counter(tokens)
        num = np.zeros(d, dtype=np.float64)
        den = 0.0
        for tid, tf in counts.items():
            w = tf * tfidf.idf(tid)
            num += w * M[tid]
            den += w
        return num / den
    if strategy == "concat_avg":
        return np.concatenate(
            [
                _static_vector(tokens, table, "avg", max_len, tfidf),
                _static_vector(tokens, table, "tfidf_avg", max_len, tfidf),
            ]
        )
    raise InvalidConfig(f"unknown static aggregation strategy {strategy!r}")


def _transformer_batch(
    encoder: TransformerEncoder,
    batch: list[tuple[int, ...]],
    strategy: str,
    layer_concat_n: int,
) -> np.ndarray:
    ids = encoder.prepare_batch(batch)
    if strategy == "cls":
        return encoder.cls_representation(ids, training=False).data
    layers, pad_mask = encoder.forward(ids, training=False)
    mask = pad_mask[:, :, None]
    counts = pad_mask.sum(axis=1, keepdims=True)

    def pooled(layer: ad.Tensor) -> ad.Tensor:
        masked = ad.mul(layer, ad.constant(mask, dtype=np.float64))
        summed = ad.sum_pool(masked, axis=1)
        return ad.mul(summed, ad.constant(1.0 / counts, dtype=np.float64))

    if strategy == "avg":
        return encoder.project(pooled(layers[-1])).data
    if strategy == "layer_concat":
        take = layers[1:][-min(layer_concat_n, len(layers) - 1) :]
        parts = [encoder.project(pooled(layer)).data for layer in take]
        return np.concatenate(parts, axis=1)
    raise InvalidConfig(f"unknown transformer aggregation strategy {strategy!r}")


def aggregate(
    sequence: TokenSequence,
    model: TokenEmbeddingTable | TransformerEncoder,
    strategy: str,
    max_len: int = 256,
    tfidf: TfidfStats | None = None,
    layer_concat_n: int = 4,
    method: str = "",
) -> Embedding:
    """One trace to one vector under the given strategy."""
    return embed_sequences(
        [sequence],
        model,
        strategy,
        max_len=max_len,
        tfidf=tfidf,
        layer_concat_n=layer_concat_n,
        method=method,
    )[0]


def embed_sequences(
    sequences: Sequence[TokenSequence],
    model: TokenEmbeddingTable | TransformerEncoder,
    strategy: str,
    max_len: int = 256,
    tfidf: TfidfStats | None = None,
    layer_concat_n: int = 4,
    batch_size: int = 64,
    method: str = "",
) -> list[Embedding]:
    """Vectorize a corpus; transformer inference runs in read-only batches."""
    if not sequences:
        return []
    name = method or strategy
    if isinstance(model, TokenEmbeddingTable):
        if strategy not in STATIC_STRATEGIES:
            raise InvalidConfig(f"strategy {strategy!r} not valid for static tables")
        return [
            Embedding(
                vector=_static_vector(tuple(s.tokens), model, strategy, max_len, tfidf),
                sample_id=s.sample_id,
                method=name,
            )
            for s in sequences
        ]
    if isinstance(model, TransformerEncoder):
        if strategy not in TRANSFORMER_STRATEGIES:
            raise InvalidConfig(f"strategy {strategy!r} not valid for transformer encoders")
        out: list[Embedding] = []
        for start in range(0, len(sequences), batch_size):
            chunk = list(sequences[start : start + batch_size])
            vecs = _transformer_batch(
                model, [tuple(s.tokens) for s in chunk], strategy, layer_concat_n
            )
            out.extend(
                Embedding(vector=vecs[i], sample_id=s.sample_id, method=name)
                for i, s in enumerate(chunk)
            )
        return out
    raise InvalidConfig(f"unsupported model type {type(model).__name__}")
