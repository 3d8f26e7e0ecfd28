"""Whole-structure embeddings via distributed bag-of-WL-labels training."""

from __future__ import annotations

import logging
from collections import Counter
from typing import Sequence

import numpy as np

from .. import autodiff as ad
from ..core import Embedding
from ..errors import InvalidInput
from .kernels import Struct, wl_features

log = logging.getLogger(__name__)


def graph2vec(
    structs: Sequence[Struct],
    dim: int = 128,
    wl_height: int = 3,
    negatives: int = 10,
    epochs: int = 100,
    lr: float = 0.025,
    batch_size: int = 256,
    seed: int = 0,
) -> list[Embedding]:
    """One vector per structure: the structure vector learns to predict its
    own WL labels (heights 0..wl_height) against negative-sampled labels.

    Deterministic under seed; epochs=0 returns the initialization.
    """
    if len(structs) < 2:
        raise InvalidInput("graph2vec needs at least 2 structures for negative sampling")
    feats = wl_features(structs, h=wl_height)

    label_index: dict[tuple, int] = {}
    corpus: list[tuple[int, int]] = []
    label_counts: Counter = Counter()
    for doc_id, counter in enumerate(feats):
        for key, cnt in sorted(counter.items()):
            if key not in label_index:
                label_index[key] = len(label_index)
            lid = label_index[key]
            label_counts[lid] += cnt
            corpus.extend([(doc_id, lid)] * cnt)
    n_labels = len(label_index)

    rng = np.random.default_rng(seed)
    D = ad.parameter(
        rng.uniform(-0.5 / dim, 0.5 / dim, size=(len(structs), dim)), dtype=np.float64
    )
    W = ad.parameter(np.zeros((n_labels, dim)), dtype=np.float64)

    freqs = np.array([label_counts[i] for i in range(n_labels)], dtype=np.float64) ** 0.75
    neg_probs = freqs / freqs.sum()
    label_ids = np.arange(n_labels)

    opt = ad.SGD([D, W], lr=lr)
    total_steps = max(1, epochs * ((len(corpus) + batch_size - 1) // batch_size))
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(len(corpus))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            docs = np.array([corpus[i][0] for i in idx], dtype=np.int64)
            pos_ids = np.array([corpus[i][1] for i in idx], dtype=np.int64)
            neg_ids = rng.choice(label_ids, size=(len(idx), negatives), p=neg_probs)
            pred = ad.embedding_lookup(D, docs)
            pos = ad.embedding_lookup(W, pos_ids)
            neg = ad.embedding_lookup(W, neg_ids)
            loss = ad.negative_sampling_loss(pred, pos, neg)
            epoch_loss += float(loss.data)
            n_batches += 1
            ad.backward(loss)
            opt.lr = max(lr * (1.0 - step / total_steps), lr * 1e-4)
            opt.step()
            step += 1
        if n_batches:
            log.info("graph2vec epoch %d/%d loss %.6f", epoch + 1, epochs, epoch_loss / n_batches)
    ids = [getattr(s, "sample_id", "") or f"struct-{i}" for i, s in enumerate(structs)]
    return [
        Embedding(vector=D.data[i].copy(), sample_id=ids[i], method="graph2vec")
        for i in range(len(structs))
    ]
