"""Stage-2 classifiers: two clusterers and two supervised models.

K-Means and Mean-Shift are implemented here because their internal policies
(empty-cluster repair, the neighbor-distance bandwidth estimate, flat-kernel
mode merging) are part of the benchmark contract. Random Forest and the
binary RBF SVMs delegate to scikit-learn; the one-vs-rest reduction and the
tie policy (lowest class id wins) are ours.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.ensemble import RandomForestClassifier
from sklearn.svm import SVC

from ..errors import InvalidInput

log = logging.getLogger(__name__)


def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInput(f"expected a non-empty 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("embedding matrix contains non-finite values")
    return X


# -- K-Means ----------------------------------------------------------------


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers[j] = X[idx]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(
    X: np.ndarray, centers: np.ndarray, max_iter: int, tol: float
) -> KMeansResult:
    k = len(centers)
    labels = np.zeros(len(X), dtype=np.int64)
    it = 0
    for it in range(1, max_iter + 1):
        d2 = cdist(X, centers, metric="sqeuclidean")
        labels = d2.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centers[j] = X[members].mean(axis=0)
        # Empty clusters re-seed on the point farthest from its own center.
        empties = [j for j in range(k) if not (labels == j).any()]
        if empties:
            dist_own = d2[np.arange(len(X)), labels]
            order = np.argsort(-dist_own)
            for rank, j in enumerate(empties):
                idx = order[rank % len(order)]
                new_centers[j] = X[idx]
                labels[idx] = j
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    d2 = cdist(X, centers, metric="sqeuclidean")
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(X)), labels].sum())
    return KMeansResult(labels=labels, centers=centers, inertia=inertia, n_iter=it)


def kmeans(
    X,
    k: int,
    n_init: int = 10,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> KMeansResult:
    """Best-inertia assignment over n_init k-means++ restarts."""
    X = _check_matrix(X)
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    if k > len(X):
        raise InvalidInput(f"k={k} exceeds sample count {len(X)}")
    rng = np.random.default_rng(seed)
    best: KMeansResult | None = None
    for _ in range(n_init):
        result = _lloyd(X, _kmeans_pp(X, k, rng), max_iter, tol)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


# -- Mean-Shift ---------------------------------------------------------------


@dataclass
class MeanShiftResult:
    labels: np.ndarray
    centers: np.ndarray
    bandwidth: float


def estimate_bandwidth(X, quantile: float = 0.3) -> float:
    """Mean over points of the distance to their ceil(quantile*n)-th nearest
    neighbor, the point itself counted as the first."""
    X = _check_matrix(X)
    if not 0.0 < quantile <= 1.0:
        raise InvalidInput(f"quantile must be in (0, 1], got {quantile}")
    n = len(X)
    kth = max(1, int(np.ceil(quantile * n)))
    dists = np.sort(cdist(X, X), axis=1)
    return float(dists[:, kth - 1].mean())


def mean_shift(
    X,
    quantile: float = 0.3,
    seed: int = 0,
    max_iter: int = 300,
    bandwidth: float | None = None,
) -> MeanShiftResult:
    """Flat-kernel mean-shift started from every point; emergent cluster count.

    The seed argument keeps the classifier API uniform; the procedure itself
    is deterministic. Zero bandwidth (all points identical) collapses to one
    cluster.
    """
    X = _check_matrix(X)
    if len(X) < 2:
        raise InvalidInput(f"mean_shift needs at least 2 samples, got {len(X)}")
    bw = estimate_bandwidth(X, quantile) if bandwidth is None else float(bandwidth)
    if bw <= 0.0:
        return MeanShiftResult(
            labels=np.zeros(len(X), dtype=np.int64), centers=X[:1].copy(), bandwidth=0.0
        )
    modes = X.copy()
    stop = 1e-3 * bw
    active = np.ones(len(X), dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        dist = cdist(modes[active], X)
        within = dist <= bw
        # Every mode is within bandwidth of at least its own start point.
        new = (within[:, :, None] * X[None]).sum(axis=1) / within.sum(axis=1)[:, None]
        shift = np.sqrt(((new - modes[active]) ** 2).sum(axis=1))
        modes[active] = new
        still = np.zeros(len(X), dtype=bool)
        still[np.flatnonzero(active)[shift >= stop]] = True
        active = still

    support = (cdist(modes, X) <= bw).sum(axis=1)
    order = np.lexsort((np.arange(len(X)), -support))
    kept: list[int] = []
    for i in order:
        if all(np.linalg.norm(modes[i] - modes[j]) > bw for j in kept):
            kept.append(i)
    centers = modes[kept]
    labels = cdist(X, centers).argmin(axis=1).astype(np.int64)
    return MeanShiftResult(labels=labels, centers=centers, bandwidth=bw)


# -- Random Forest -------------------------------------------------------------


@dataclass
class RandomForest:
    """Bootstrap-aggregated Gini trees; ties resolve to the lowest class id."""

    n_trees: int = 100
    max_depth: int = 10
    min_split: int = 5
    seed: int = 0
    _model: RandomForestClassifier | None = field(default=None, repr=False)

    def fit(self, X, y) -> "RandomForest":
        X = _check_matrix(X)
        y = np.asarray(y, dtype=np.int64)
        if len(np.unique(y)) < 2:
            raise InvalidInput("random forest requires at least 2 classes")
        self._model = RandomForestClassifier(
            n_estimators=self.n_trees,
            max_depth=self.max_depth,
            min_samples_split=self.min_split,
            criterion="gini",
            max_features="sqrt",
            bootstrap=True,
            random_state=self.seed,
        )
        self._model.fit(X, y)
        return self

    @property
    def classes_(self) -> np.ndarray:
        if self._model is None:
            raise InvalidInput("classifier not fitted")
        return self._model.classes_

    def predict(self, X) -> np.ndarray:
        if self._model is None:
            raise InvalidInput("classifier not fitted")
        X = _check_matrix(X)
        proba = self._model.predict_proba(X)
        # argmax takes the first maximum; classes_ is sorted ascending.
        return self._model.classes_[np.argmax(proba, axis=1)]


# -- SVM ------------------------------------------------------------------------


@dataclass
class Svm:
    """One-vs-rest RBF soft-margin SVMs; ties resolve to the lowest class id."""

    c: float = 1.0
    gamma: str | float = "scale"
    seed: int = 0
    classes_: np.ndarray | None = field(default=None, repr=False)
    _models: list[SVC] = field(default_factory=list, repr=False)
    gamma_: float = 0.0

    def fit(self, X, y) -> "Svm":
        X = _check_matrix(X)
        y = np.asarray(y, dtype=np.int64)
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise InvalidInput("svm requires at least 2 classes")
        if self.gamma == "scale":
            var = float(X.var())
            if var > 0.0:
                self.gamma_ = 1.0 / (X.shape[1] * var)
            else:
                log.warning("zero-variance features; falling back to gamma=1/d")
                self.gamma_ = 1.0 / X.shape[1]
        else:
            self.gamma_ = float(self.gamma)
        self._models = []
        for cls in self.classes_:
            binary = SVC(
                kernel="rbf", C=self.c, gamma=self.gamma_, tol=1e-3, random_state=self.seed
            )
            binary.fit(X, (y == cls).astype(np.int64))
            self._models.append(binary)
        return self

    def decision_values(self, X) -> np.ndarray:
        if not self._models:
            raise InvalidInput("classifier not fitted")
        X = _check_matrix(X)
        return np.column_stack([m.decision_function(X) for m in self._models])

    def predict(self, X) -> np.ndarray:
        values = self.decision_values(X)
        return self.classes_[np.argmax(values, axis=1)]


def random_forest(X, y, n_trees=100, max_depth=10, min_split=5, seed=0) -> RandomForest:
    return RandomForest(n_trees=n_trees, max_depth=max_depth, min_split=min_split, seed=seed).fit(X, y)


def svm(X, y, c=1.0, gamma="scale", seed=0) -> Svm:
    return Svm(c=c, gamma=gamma, seed=seed).fit(X, y)
