"""Similarity/distance matrices and their conversion to embeddings."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import Embedding
from ..errors import InvalidInput

_SYM_TOL = 1e-9


@dataclass
class SimilarityMatrix:
    """Pairwise kernel or distance values over a fixed sample order."""

    values: np.ndarray
    kind: str
    method: str = ""
    sample_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        V = np.asarray(self.values, dtype=np.float64)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise InvalidInput(f"similarity matrix must be square, got {V.shape}")
        if self.kind not in ("kernel", "distance"):
            raise InvalidInput(f"unknown matrix kind {self.kind!r}")
        if not np.all(np.isfinite(V)):
            raise InvalidInput("similarity matrix contains NaN/Inf")
        if np.max(np.abs(V - V.T)) > _SYM_TOL:
            raise InvalidInput("matrix asymmetric beyond tolerance")
        if self.kind == "kernel":
            if np.any(np.diagonal(V) <= 0):
                raise InvalidInput("kernel diagonal must be positive")
        else:
            if np.max(np.abs(np.diagonal(V))) > _SYM_TOL:
                raise InvalidInput("distance diagonal must be zero")
            if np.min(V) < -_SYM_TOL:
                raise InvalidInput("distance entries must be non-negative")
        self.values = V
        if self.sample_ids and len(self.sample_ids) != V.shape[0]:
            raise InvalidInput(
                f"{len(self.sample_ids)} sample ids for a {V.shape[0]}-row matrix"
            )

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def to_csv(self, path: str | Path) -> None:
        ids = self.sample_ids or [str(i) for i in range(self.n)]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(ids)
            for row in self.values:
                writer.writerow([f"{x:.12g}" for x in row])


def _signed(vectors: np.ndarray) -> np.ndarray:
    """Deterministic sign: largest-magnitude component of each column positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        k = int(np.argmax(np.abs(col)))
        if col[k] < 0:
            out[:, j] = -col
    return out


def matrix_to_embeddings(m: SimilarityMatrix, d: int = 128) -> list[Embedding]:
    """Spectral coordinates from a kernel (kernel PCA) or distance (classical MDS).

    Negative eigenvalues are clamped to zero; coordinates beyond the matrix
    rank are exactly zero; eigenvector signs follow a deterministic convention.
    """
    if d < 1:
        raise InvalidInput(f"d must be >= 1, got {d}")
    n = m.n
    H = np.eye(n) - np.full((n, n), 1.0 / n)
    if m.kind == "kernel":
        B = H @ m.values @ H
    else:
        B = -0.5 * H @ (m.values**2) @ H
    B = (B + B.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(B)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = _signed(eigvecs[:, order])
    take = min(d, n)
    X = np.zeros((n, d), dtype=np.float64)
    X[:, :take] = eigvecs[:, :take] * np.sqrt(eigvals[:take])
    ids = m.sample_ids or [str(i) for i in range(n)]
    name = m.method or m.kind
    return [Embedding(vector=X[i], sample_id=ids[i], method=name) for i in range(n)]
