"""Static token-embedding tables: CBOW and GloVe trainers."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import autodiff as ad
from ..abstraction import TokenSequence
from ..core import PAD_ID, UNK_ID, Vocabulary
from ..errors import InvalidConfig, InvalidInput

log = logging.getLogger(__name__)

_RESERVED_ROWS = 4  # [PAD], [CLS], [MASK], [UNK]


@dataclass
class TokenEmbeddingTable:
    """|V| x d static vectors plus the training metadata that produced them."""

    matrix: np.ndarray
    method: str
    window: int
    epochs: int
    seed: int

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise InvalidInput("embedding table must be 2-D")
        if not np.all(np.isfinite(self.matrix)):
            raise InvalidInput("embedding table contains NaN/Inf")

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def vector(self, token_id: int) -> np.ndarray:
        return self.matrix[token_id]

    def save(self, path: str | Path) -> None:
        ad.save_checkpoint(path, {"matrix": self.matrix})

    @classmethod
    def load(cls, path: str | Path, method: str = "", window: int = 0, epochs: int = 0, seed: int = 0):
        matrix = ad.load_checkpoint(path)["matrix"]
        return cls(matrix=matrix, method=method, window=window, epochs=epochs, seed=seed)


def _sequences_as_ids(sequences: Sequence[TokenSequence]) -> list[tuple[int, ...]]:
    if not sequences:
        raise InvalidInput("no sequences supplied")
    return [tuple(s.tokens) for s in sequences]


def train_cbow(
    sequences: Sequence[TokenSequence],
    vocab: Vocabulary,
    dim: int = 128,
    window: int = 5,
    negatives: int = 10,
    epochs: int = 100,
    lr: float = 0.025,
    batch_size: int = 256,
    seed: int = 0,
) -> TokenEmbeddingTable:
    """Context-average-predicts-center training with negative sampling.

    Input and output tables are tied; negatives follow the unigram^0.75
    distribution over real tokens; learning rate decays linearly to 1e-4 of
    its start. Deterministic under (data order, seed).
    """
    seqs = _sequences_as_ids(sequences)
    V = len(vocab)
    if vocab.n_real < negatives + 1:
        raise InvalidConfig(
            f"vocabulary has {vocab.n_real} real tokens, need >= negatives+1 = {negatives + 1}"
        )
    rng = np.random.default_rng(seed)
    table = ad.parameter(rng.uniform(-0.5 / dim, 0.5 / dim, size=(V, dim)), dtype=np.float64)

    examples: list[tuple[tuple[int, ...], int]] = []
    for seq in seqs:
        n = len(seq)
        for c in range(n):
            ctx = seq[max(0, c - window) : c] + seq[c + 1 : c + 1 + window]
            if ctx:
                examples.append((ctx, seq[c]))
    if not examples:
        raise InvalidInput("no training examples (all sequences are singletons)")

    # Unigram^0.75 negative-sampling distribution over real token ids.
    real_ids = np.arange(_RESERVED_ROWS, V)
    freqs = np.array([vocab.frequency_of(int(i)) for i in real_ids], dtype=np.float64)
    freqs = np.maximum(freqs, 1.0) ** 0.75
    neg_probs = freqs / freqs.sum()

    width = 2 * window
    total_steps = max(1, epochs * ((len(examples) + batch_size - 1) // batch_size))
    opt = ad.SGD([table], lr=lr)
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(len(examples))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            B = len(idx)
            ctx_ids = np.full((B, width), PAD_ID, dtype=np.int64)
            mask = np.zeros((B, width, 1), dtype=np.float64)
            centers = np.empty(B, dtype=np.int64)
            counts = np.empty((B, 1), dtype=np.float64)
            for r, ei in enumerate(idx):
                ctx, center = examples[ei]
                ctx_ids[r, : len(ctx)] = ctx
                mask[r, : len(ctx), 0] = 1.0
                centers[r] = center
                counts[r, 0] = len(ctx)
            neg_ids = rng.choice(real_ids, size=(B, negatives), p=neg_probs)

            ctx_emb = ad.embedding_lookup(table, ctx_ids)
            summed = ad.sum_pool(ad.mul(ctx_emb, ad.constant(mask, dtype=np.float64)), axis=1)
            pred = ad.mul(summed, ad.constant(1.0 / counts, dtype=np.float64))
            pos = ad.embedding_lookup(table, centers)
            neg = ad.embedding_lookup(table, neg_ids)
            loss = ad.negative_sampling_loss(pred, pos, neg)
            epoch_loss += float(loss.data)
            n_batches += 1
            ad.backward(loss)
            opt.lr = max(lr * (1.0 - step / total_steps), lr * 1e-4)
            opt.step()
            step += 1
        if n_batches:
            log.info("cbow epoch %d/%d loss %.6f", epoch + 1, epochs, epoch_loss / n_batches)
    return TokenEmbeddingTable(
        matrix=table.data.copy(), method="cbow", window=window, epochs=epochs, seed=seed
    )


def glove_weight(x: np.ndarray | float, xmax: float = 100.0, alpha: float = 0.75):
    """GloVe loss weighting f(x) = (x / xmax)^alpha, capped at 1."""
    return np.minimum(np.power(np.asarray(x, dtype=np.float64) / xmax, alpha), 1.0)


def build_cooccurrence(
    seqs: Sequence[tuple[int, ...]], window: int = 10
) -> dict[tuple[int, int], float]:
    """Symmetric-window counts with 1/distance weighting; symmetric matrix."""
    X: dict[tuple[int, int], float] = {}
    for seq in seqs:
        n = len(seq)
        for i in range(n):
            for off in range(1, window + 1):
                j = i + off
                if j >= n:
                    break
                a, b = seq[i], seq[j]
                w = 1.0 / off
                X[(a, b)] = X.get((a, b), 0.0) + w
                X[(b, a)] = X.get((b, a), 0.0) + w
    return X


def train_glove(
    sequences: Sequence[TokenSequence],
    vocab: Vocabulary,
    dim: int = 128,
    window: int = 10,
    xmax: float = 100.0,
    alpha: float = 0.75,
    epochs: int = 100,
    lr: float = 0.001,
    batch_size: int = 512,
    seed: int = 0,
) -> TokenEmbeddingTable:
    """Weighted least squares on log co-occurrence; final table is w + w_tilde."""
    seqs = _sequences_as_ids(sequences)
    V = len(vocab)
    X = build_cooccurrence(seqs, window=window)
    if not X:
        raise InvalidInput("no co-occurrence pairs (all sequences are singletons)")
    entries = sorted(X.items())
    I = np.array([k[0] for k, _ in entries], dtype=np.int64)
    J = np.array([k[1] for k, _ in entries], dtype=np.int64)
    logx = np.log(np.array([v for _, v in entries], dtype=np.float64))
    fw = glove_weight(np.array([v for _, v in entries]), xmax=xmax, alpha=alpha)

    rng = np.random.default_rng(seed)
    w = ad.parameter(rng.uniform(-0.5, 0.5, size=(V, dim)) / dim, dtype=np.float64)
    wt = ad.parameter(rng.uniform(-0.5, 0.5, size=(V, dim)) / dim, dtype=np.float64)
    b = ad.parameter(np.zeros((V, 1)), dtype=np.float64)
    bt = ad.parameter(np.zeros((V, 1)), dtype=np.float64)
    opt = ad.Adam([w, wt, b, bt], lr=lr)

    n = len(entries)
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            wi = ad.embedding_lookup(w, I[idx])
            wj = ad.embedding_lookup(wt, J[idx])
            bi = ad.reshape(ad.embedding_lookup(b, I[idx]), (len(idx),))
            bj = ad.reshape(ad.embedding_lookup(bt, J[idx]), (len(idx),))
            inner = ad.sum_pool(ad.mul(wi, wj), axis=1)
            diff = ad.sub(ad.add(ad.add(inner, bi), bj), ad.constant(logx[idx], dtype=np.float64))
            sq = ad.mul(diff, diff)
            loss = ad.mean_pool(ad.mul(sq, ad.constant(fw[idx], dtype=np.float64)))
            epoch_loss += float(loss.data)
            n_batches += 1
            ad.backward(loss)
            opt.step()
        log.info("glove epoch %d/%d loss %.6f", epoch + 1, epochs, epoch_loss / n_batches)
    return TokenEmbeddingTable(
        matrix=(w.data + wt.data).copy(), method="glove", window=window, epochs=epochs, seed=seed
    )
