"""Report emission: the method-by-classifier matrix, rankings, projections.

The matrix report arranges rows as sequence/graph/tree blocks and columns as
classifier-metric pairs; the heatmap variant adds per-column min-max
normalized values so a plotting tool can map them straight to a gradient.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import Embedding
from ..errors import InvalidInput
from .config import ABSTRACTIONS, LEGAL_MATRIX
from .runner import BenchResultStore, CellResult

_FORMATS = ("csv", "markdown", "heatmap-data")

_METRICS_BY_CLASSIFIER = {
    "kmeans": ("accuracy", "nmi"),
    "mean_shift": ("accuracy", "nmi"),
    "random_forest": ("accuracy", "macro_f1"),
    "svm": ("accuracy", "macro_f1"),
}


def _row_order(results: Sequence[CellResult]) -> list[tuple[str, str, str]]:
    """Table-4 ordering: abstraction blocks, then declared method order."""
    present = {(r.abstraction, r.method, r.variant) for r in results}
    ordered = []
    for a in ABSTRACTIONS:
        for m, variants in LEGAL_MATRIX.get(a, {}).items():
            for v in variants:
                if (a, m, v) in present:
                    ordered.append((a, m, v))
    # Anything non-canonical (shouldn't happen) trails in sorted order.
    leftovers = sorted(present - set(ordered))
    return ordered + leftovers


def _columns(results: Sequence[CellResult]) -> list[tuple[str, str]]:
    seen = []
    for clf in _METRICS_BY_CLASSIFIER:
        if any(r.classifier == clf for r in results):
            for metric in _METRICS_BY_CLASSIFIER[clf]:
                seen.append((clf, metric))
    return seen


def _value_grid(results: Sequence[CellResult]):
    rows = _row_order(results)
    cols = _columns(results)
    by_key = {(r.abstraction, r.method, r.variant, r.classifier): r for r in results}
    grid: dict[tuple, float | None] = {}
    for row in rows:
        for clf, metric in cols:
            r = by_key.get(row + (clf,))
            if r is None or r.status != "ok" or metric not in r.metrics:
                grid[row + (clf, metric)] = None
            else:
                grid[row + (clf, metric)] = float(r.metrics[metric]["mean"])
    return rows, cols, grid


def _top_flags(rows, cols, grid) -> set[tuple]:
    """Every cell tied with its column maximum is flagged."""
    flags = set()
    for col in cols:
        values = [(row, grid[row + col]) for row in rows if grid[row + col] is not None]
        if not values:
            continue
        best = max(v for _row, v in values)
        for row, v in values:
            if v == best:
                flags.add(row + col)
    return flags


def emit_matrix_report(
    store: BenchResultStore, out_dir: str | Path, format: str = "csv"
) -> Path:
    """Write the method-by-classifier matrix in the requested format."""
    if format not in _FORMATS:
        raise InvalidInput(f"unknown report format {format!r}; expected one of {_FORMATS}")
    results = store.sorted_results()
    if not results:
        raise InvalidInput("result store is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, cols, grid = _value_grid(results)
    flags = _top_flags(rows, cols, grid)
    col_names = [f"{clf}_{metric}" for clf, metric in cols]

    if format == "csv":
        path = out_dir / "matrix.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["abstraction", "method", "variant", *col_names])
            for row in rows:
                cells = []
                for col in cols:
                    v = grid[row + col]
                    cells.append("" if v is None else f"{v:.6f}")
                writer.writerow([*row, *cells])
        return path

    if format == "markdown":
        path = out_dir / "matrix.md"
        lines = [
            "| abstraction | method | variant | " + " | ".join(col_names) + " |",
            "|" + "---|" * (3 + len(cols)),
        ]
        for row in rows:
            cells = []
            for col in cols:
                v = grid[row + col]
                if v is None:
                    cells.append("-")
                elif row + col in flags:
                    cells.append(f"**{v:.4f}**")
                else:
                    cells.append(f"{v:.4f}")
            lines.append("| " + " | ".join([*row, *cells]) + " |")
        path.write_text("\n".join(lines) + "\n")
        return path

    path = out_dir / "heatmap.csv"
    ranges = {}
    for col in cols:
        values = [grid[row + col] for row in rows if grid[row + col] is not None]
        if values:
            ranges[col] = (min(values), max(values))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["abstraction", "method", "variant", "column", "raw", "normalized", "top"])
        for row in rows:
            for col in cols:
                v = grid[row + col]
                if v is None:
                    continue
                lo, hi = ranges[col]
                norm = 1.0 if hi == lo else (v - lo) / (hi - lo)
                writer.writerow(
                    [*row, f"{col[0]}_{col[1]}", f"{v:.6f}", f"{norm:.6f}",
                     int(row + col in flags)]
                )
    return path


def emit_rankings(
    stores: BenchResultStore | Sequence[BenchResultStore],
    out_dir: str | Path,
    top_n: int = 3,
) -> Path:
    """Top-N methods per classifier, ranked by the mean of metric means
    across datasets; ties break alphabetically on the method name."""
    if isinstance(stores, BenchResultStore):
        stores = [stores]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scores: dict[str, dict[str, list[float]]] = {}
    for store in stores:
        for r in store.results:
            if r.status != "ok" or not r.metrics:
                continue
            name = f"{r.abstraction}/{r.method}/{r.variant}"
            means = [m["mean"] for m in r.metrics.values()]
            scores.setdefault(r.classifier, {}).setdefault(name, []).append(
                float(np.mean(means))
            )
    path = out_dir / "rankings.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["classifier", "rank", "method", "score"])
        for clf in sorted(scores):
            ranked = sorted(
                ((name, float(np.mean(vals))) for name, vals in scores[clf].items()),
                key=lambda item: (-item[1], item[0]),
            )
            for rank, (name, score) in enumerate(ranked[:top_n], start=1):
                writer.writerow([clf, rank, name, f"{score:.6f}"])
    return path


def _pca_coords(X: np.ndarray, dims: int) -> np.ndarray:
    centered = X - X.mean(axis=0, keepdims=True)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    # Sign convention: each component's largest-magnitude loading positive.
    for j in range(vt.shape[0]):
        pivot = np.argmax(np.abs(vt[j]))
        if vt[j, pivot] < 0:
            vt[j] = -vt[j]
            u[:, j] = -u[:, j]
    coords = u[:, :dims] * s[:dims]
    if coords.shape[1] < dims:
        coords = np.pad(coords, ((0, 0), (0, dims - coords.shape[1])))
    return coords


def export_projection(
    embeddings: Sequence[Embedding],
    path: str | Path,
    labels: dict[str, int] | None = None,
    dims: int = 2,
) -> Path:
    """Principal-component coordinates per sample, written as CSV."""
    if len(embeddings) < 2:
        raise InvalidInput(f"projection needs at least 2 embeddings, got {len(embeddings)}")
    X = np.vstack([e.vector for e in embeddings])
    coords = _pca_coords(X, dims)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "family", *[f"pc{j+1}" for j in range(dims)]])
        for i, emb in enumerate(embeddings):
            fam = "" if labels is None else labels.get(emb.sample_id, "")
            writer.writerow(
                [emb.sample_id, fam, *[f"{coords[i, j]:.8f}" for j in range(dims)]]
            )
    return path
