"""The evaluation protocol: seeded runs, stratified splits, metric reports.

Supervised classifiers get a fresh stratified 80/20 split per seed and are
scored on the test side only. Clusterers see all included samples; outliers
(family -1) can join the clustering input but never the ground truth unless
explicitly requested. K-Means always receives the true family count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from ..core import Dataset, Embedding
from ..errors import InvalidConfig, InvalidInput
from .classifiers import kmeans, mean_shift, random_forest, svm
from .metrics import hungarian_accuracy, macro_f1, nmi

log = logging.getLogger(__name__)

UNSUPERVISED = ("kmeans", "mean_shift")
SUPERVISED = ("random_forest", "svm")
CLASSIFIERS = UNSUPERVISED + SUPERVISED


@dataclass
class LabeledEmbeddingSet:
    """Embedding matrix with aligned integer labels (-1 marks outliers)."""

    X: np.ndarray
    y: np.ndarray
    sample_ids: tuple[str, ...] = ()

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise InvalidInput(f"X must be 2-D, got shape {self.X.shape}")
        if len(self.X) != len(self.y):
            raise InvalidInput(f"{len(self.X)} rows but {len(self.y)} labels")
        if not np.all(np.isfinite(self.X)):
            raise InvalidInput("X contains non-finite values")
        if self.sample_ids and len(self.sample_ids) != len(self.y):
            raise InvalidInput("sample_ids length does not match labels")
        bad = self.y[(self.y != -1) & (self.y < 1)]
        if len(bad):
            raise InvalidInput(f"labels must be -1 or >= 1, got {bad[:5]}")

    @property
    def n_samples(self) -> int:
        return len(self.y)

    @property
    def families(self) -> list[int]:
        return sorted(int(v) for v in np.unique(self.y) if v != -1)

    @classmethod
    def from_embeddings(
        cls, embeddings: Sequence[Embedding], dataset: Dataset
    ) -> "LabeledEmbeddingSet":
        """Align embedding vectors with dataset labels by sample id."""
        by_id = {t.filemd5: t.family for t in dataset.traces}
        rows, labels, ids = [], [], []
        for emb in embeddings:
            if emb.sample_id not in by_id:
                raise InvalidInput(f"embedding for unknown sample {emb.sample_id!r}")
            rows.append(emb.vector)
            labels.append(by_id[emb.sample_id])
            ids.append(emb.sample_id)
        if not rows:
            raise InvalidInput("no embeddings supplied")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise InvalidInput(f"inconsistent embedding dims: {sorted(widths)}")
        return cls(X=np.vstack(rows), y=np.array(labels), sample_ids=tuple(ids))


@dataclass
class MetricReport:
    """Per-seed metric values plus their mean and population std."""

    classifier: str
    seeds: tuple[int, ...]
    per_seed: dict[str, list[float]]
    runs: list[dict] = field(default_factory=list)

    def __post_init__(self):
        for name, values in self.per_seed.items():
            if len(values) != len(self.seeds):
                raise InvalidInput(
                    f"{name}: {len(values)} values for {len(self.seeds)} seeds"
                )
            for v in values:
                if not 0.0 <= v <= 1.0:
                    raise InvalidInput(f"{name} value {v} outside [0, 1]")

    def mean(self, metric: str) -> float:
        return float(np.mean(self.per_seed[metric]))

    def std(self, metric: str) -> float:
        return float(np.std(self.per_seed[metric]))

    def summary(self) -> dict[str, tuple[float, float]]:
        return {m: (self.mean(m), self.std(m)) for m in sorted(self.per_seed)}


def stratified_split(
    y, test_fraction: float = 0.2, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Per-family shuffle-and-cut; families under 2 samples go wholly to train.

    Test counts round to the nearest sample but stay within [1, n-1] for every
    family large enough to split.
    """
    y = np.asarray(y)
    if not 0.0 < test_fraction < 1.0:
        raise InvalidInput(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train: list[int] = []
    test: list[int] = []
    for fam in np.unique(y):
        idx = np.flatnonzero(y == fam)
        if len(idx) < 2:
            log.warning("family %s has %d sample(s); merged into train", fam, len(idx))
            train.extend(idx)
            continue
        perm = rng.permutation(idx)
        n_test = int(round(test_fraction * len(idx)))
        n_test = min(max(n_test, 1), len(idx) - 1)
        test.extend(perm[:n_test])
        train.extend(perm[n_test:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))


def _run_supervised(
    emb: LabeledEmbeddingSet, classifier: str, seed: int, params: dict, test_fraction: float
) -> tuple[dict[str, float], dict]:
    idx = np.flatnonzero(emb.y != -1)
    tr, te = stratified_split(emb.y[idx], test_fraction=test_fraction, seed=seed)
    train_idx, test_idx = idx[tr], idx[te]
    fit = random_forest if classifier == "random_forest" else svm
    model = fit(emb.X[train_idx], emb.y[train_idx], seed=seed, **params)
    pred = model.predict(emb.X[test_idx])
    truth = emb.y[test_idx]
    values = {
        "accuracy": float(np.mean(pred == truth)),
        "macro_f1": macro_f1(pred, truth),
    }
    record = {
        "seed": seed,
        "classifier": classifier,
        "n_train": int(len(train_idx)),
        "n_test": int(len(test_idx)),
        "train_families": {int(f): int(np.sum(emb.y[train_idx] == f)) for f in emb.families},
        "test_families": {int(f): int(np.sum(emb.y[test_idx] == f)) for f in emb.families},
    }
    return values, record


def _run_unsupervised(
    emb: LabeledEmbeddingSet,
    classifier: str,
    seed: int,
    params: dict,
    cluster_with_outliers: bool,
    score_outliers: bool,
) -> tuple[dict[str, float], dict]:
    include = (
        np.arange(emb.n_samples)
        if cluster_with_outliers
        else np.flatnonzero(emb.y != -1)
    )
    X = emb.X[include]
    truth = emb.y[include]
    k = len(emb.families)
    if classifier == "kmeans":
        labels = kmeans(X, k=k, seed=seed, **params).labels
    else:
        labels = mean_shift(X, seed=seed, **params).labels
    score_mask = np.ones(len(truth), dtype=bool) if score_outliers else truth != -1
    values = {
        "accuracy": hungarian_accuracy(labels[score_mask], truth[score_mask]),
        "nmi": nmi(labels[score_mask], truth[score_mask]),
    }
    record = {
        "seed": seed,
        "classifier": classifier,
        "k": k if classifier == "kmeans" else int(len(np.unique(labels))),
        "n_clustered": int(len(X)),
        "n_scored": int(score_mask.sum()),
    }
    return values, record


def run_protocol(
    emb: LabeledEmbeddingSet,
    classifier: str,
    seeds: int = 10,
    base_seed: int = 0,
    params: dict | None = None,
    test_fraction: float = 0.2,
    cluster_with_outliers: bool = True,
    score_outliers: bool = False,
) -> MetricReport:
    """Seeded evaluation runs for one classifier over one embedding set."""
    if classifier not in CLASSIFIERS:
        raise InvalidConfig(f"unknown classifier {classifier!r}; expected {CLASSIFIERS}")
    if seeds < 1:
        raise InvalidConfig(f"seeds must be >= 1, got {seeds}")
    if len(emb.families) < 2:
        raise InvalidInput("evaluation requires at least 2 families")
    params = dict(params or {})
    seed_values = tuple(base_seed + i for i in range(seeds))
    per_seed: dict[str, list[float]] = {}
    records: list[dict] = []
    for seed in seed_values:
        if classifier in SUPERVISED:
            values, record = _run_supervised(emb, classifier, seed, params, test_fraction)
        else:
            values, record = _run_unsupervised(
                emb, classifier, seed, params, cluster_with_outliers, score_outliers
            )
        for name, v in values.items():
            per_seed.setdefault(name, []).append(v)
        records.append(record)
    return MetricReport(
        classifier=classifier, seeds=seed_values, per_seed=per_seed, runs=records
    )


def _stratified_folds(y: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Round-robin fold ids per class after a shuffle."""
    assign = np.zeros(len(y), dtype=np.int64)
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        for pos, i in enumerate(idx):
            assign[i] = pos % folds
    return assign


def grid_search(
    X,
    y,
    classifier: str,
    grid: dict[str, Sequence],
    folds: int = 3,
    seed: int = 0,
) -> tuple[dict, float]:
    """3-fold stratified CV over a small parameter grid, scored by macro-F1.

    Supervised classifiers only; ties keep the earliest combination in sorted
    key order.
    """
    if classifier not in SUPERVISED:
        raise InvalidInput(f"grid search supports supervised classifiers, not {classifier!r}")
    if not grid:
        raise InvalidConfig("empty parameter grid")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(seed)
    assign = _stratified_folds(y, folds, rng)
    fit = random_forest if classifier == "random_forest" else svm
    keys = sorted(grid)
    best: tuple[dict, float] | None = None
    for combo in product(*(grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        scores = []
        for f in range(folds):
            tr, te = assign != f, assign == f
            if len(np.unique(y[tr])) < 2 or not te.any():
                continue
            model = fit(X[tr], y[tr], seed=seed, **params)
            scores.append(macro_f1(model.predict(X[te]), y[te]))
        score = float(np.mean(scores)) if scores else 0.0
        if best is None or score > best[1]:
            best = (params, score)
    return best
