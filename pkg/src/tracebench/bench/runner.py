"""Benchmark orchestration: Stage-1 embedding jobs, Stage-2 evaluation cells.

Stage 1 trains or computes one encoder per (abstraction, method) group and
materializes one embedding file per variant under out_dir/embeddings; those
files are the resumability boundary. Stage 2 evaluates every
(cell, classifier) pair from cached embeddings. A failing cell records its
reason and never aborts the rest of the matrix.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..abstraction import pair_events, to_graph, to_sequence, to_tree
from ..core import Dataset, Embedding, Vocabulary, build_vocabulary, load_jsonl
from ..errors import ConfigError, InvalidInput, TraceBenchError
from ..evaluate import LabeledEmbeddingSet, run_protocol, stratified_split
from ..seqembed import (
    TransformerConfig,
    build_tfidf_stats,
    embed_sequences,
    pretrain_transformer_mlm,
    train_cbow,
    train_glove,
    train_simcse,
)
from ..structembed import graph2vec, matrix_to_embeddings
from ..structembed.editdist import ged_matrix, ted_matrix
from ..structembed.gnn import embed_structs, train_gnn
from ..structembed.kernels import path_kernel, random_walk_kernel, wl_subtree_kernel
from ..synth import load_recipe, synthesize_dataset
from .config import NO_VARIANT, BenchConfig, Cell

log = logging.getLogger(__name__)

_TRANSFORMER_CFG_KEYS = ("n_layers", "n_heads", "hidden", "ff", "max_len", "dropout")


@dataclass
class CellResult:
    dataset: str
    abstraction: str
    method: str
    variant: str
    classifier: str
    status: str = "ok"
    error: str = ""
    metrics: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def key(self) -> tuple[str, str, str, str, str]:
        return (self.dataset, self.abstraction, self.method, self.variant, self.classifier)


@dataclass
class BenchResultStore:
    dataset: str
    config: dict
    results: list[CellResult] = field(default_factory=list)
    stage1: list[dict] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for r in self.results:
            if r.key in seen:
                raise InvalidInput(f"duplicate result key {r.key}")
            seen.add(r.key)

    def sorted_results(self) -> list[CellResult]:
        return sorted(self.results, key=lambda r: r.key)

    def to_json_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "config": self.config,
            "stage1": self.stage1,
            "results": [
                {
                    "dataset": r.dataset,
                    "abstraction": r.abstraction,
                    "method": r.method,
                    "variant": r.variant,
                    "classifier": r.classifier,
                    "status": r.status,
                    "error": r.error,
                    "wall_time": r.wall_time,
                    "metrics": r.metrics,
                }
                for r in self.sorted_results()
            ],
        }

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        """results.csv (deterministic, no wall times) and results.json."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "results.csv"
        lines = ["dataset,abstraction,method,variant,classifier,metric,mean,std,n_seeds,status,error"]
        for r in self.sorted_results():
            base = f"{r.dataset},{r.abstraction},{r.method},{r.variant},{r.classifier}"
            if r.status != "ok":
                err = r.error.replace(",", ";").replace("\n", " ")
                lines.append(f"{base},-,,,0,{r.status},{err}")
                continue
            for metric in sorted(r.metrics):
                m = r.metrics[metric]
                n = len(m["per_seed"])
                lines.append(
                    f"{base},{metric},{m['mean']:.12g},{m['std']:.12g},{n},ok,"
                )
        csv_path.write_text("\n".join(lines) + "\n")
        json_path = out_dir / "results.json"
        json_path.write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True))
        return csv_path, json_path


def load_results(out_dir: str | Path) -> BenchResultStore:
    """Rehydrate a result store from a run directory's results.json."""
    path = Path(out_dir) / "results.json"
    if not path.exists():
        raise InvalidInput(f"no results.json under {out_dir}")
    raw = json.loads(path.read_text())
    results = [
        CellResult(
            dataset=r["dataset"],
            abstraction=r["abstraction"],
            method=r["method"],
            variant=r["variant"],
            classifier=r["classifier"],
            status=r["status"],
            error=r.get("error", ""),
            metrics=r.get("metrics", {}),
            wall_time=r.get("wall_time", 0.0),
        )
        for r in raw["results"]
    ]
    return BenchResultStore(
        dataset=raw["dataset"],
        config=raw.get("config", {}),
        results=results,
        stage1=raw.get("stage1", []),
    )


def save_embeddings_npz(path: str | Path, embeddings: Sequence[Embedding]) -> None:
    if not embeddings:
        raise InvalidInput("no embeddings to save")
    X = np.vstack([e.vector for e in embeddings])
    ids = np.array([e.sample_id for e in embeddings])
    method = np.array([embeddings[0].method])
    np.savez(path, X=X, ids=ids, method=method)


def load_embeddings_npz(path: str | Path) -> list[Embedding]:
    with np.load(path, allow_pickle=False) as data:
        X, ids = data["X"], data["ids"]
        method = str(data["method"][0]) if "method" in data else ""
    return [
        Embedding(vector=X[i].copy(), sample_id=str(ids[i]), method=method)
        for i in range(len(ids))
    ]


def _load_bench_dataset(cfg: BenchConfig) -> Dataset:
    ds = cfg.dataset
    if "path" in ds:
        return load_jsonl(ds["path"], name=cfg.dataset_name)
    recipe = load_recipe(ds.get("recipe") or ds["recipe_file"])
    return synthesize_dataset(recipe)


def _cell_id(cell: Cell) -> str:
    return f"{cell.abstraction}__{cell.method}__{cell.variant.replace('-', 'novariant')}"


class _Stage1:
    """Trains each (abstraction, method) group once and emits per-variant
    embeddings, honoring the on-disk cache."""

    def __init__(self, cfg: BenchConfig, dataset: Dataset, emb_dir: Path, resume: bool):
        self.cfg = cfg
        self.dataset = dataset
        self.emb_dir = emb_dir
        self.resume = resume
        self.vocab: Vocabulary = build_vocabulary(dataset.traces, min_count=cfg.min_count)
        self._sequences = None
        self._graphs = None
        self._trees = None
        self.records: list[dict] = []

    def sequences(self):
        if self._sequences is None:
            self._sequences = [to_sequence(t, self.vocab) for t in self.dataset.traces]
        return self._sequences

    def structs(self, abstraction: str):
        if abstraction == "graph":
            if self._graphs is None:
                self._graphs = [
                    to_graph(pair_events(t), sample_id=t.filemd5) for t in self.dataset.traces
                ]
            return self._graphs
        if self._trees is None:
            self._trees = [
                to_tree(pair_events(t), sample_id=t.filemd5) for t in self.dataset.traces
            ]
        return self._trees

    def cache_path(self, cell: Cell) -> Path:
        return self.emb_dir / f"{_cell_id(cell)}.npz"

    def run_group(self, abstraction: str, method: str, variants: list[str]) -> dict[Cell, str]:
        """Returns cell -> error message ('' on success) after ensuring caches."""
        cells = [Cell(abstraction, method, v) for v in variants]
        missing = [c for c in cells if not (self.resume and self.cache_path(c).exists())]
        errors: dict[Cell, str] = {c: "" for c in cells}
        for c in set(cells) - set(missing):
            self.records.append(
                {"abstraction": abstraction, "method": method, "variant": c.variant,
                 "status": "cached", "wall_time": 0.0}
            )
        if not missing:
            return errors
        started = time.monotonic()
        try:
            produced = self._compute(abstraction, method, [c.variant for c in missing])
        except Exception as exc:  # an encoder failure poisons only its own cells
            log.exception("stage-1 %s/%s failed", abstraction, method)
            reason = f"stage1 {type(exc).__name__}: {exc}"
            for c in missing:
                errors[c] = reason
                self.records.append(
                    {"abstraction": abstraction, "method": method, "variant": c.variant,
                     "status": "failed", "error": reason,
                     "wall_time": time.monotonic() - started}
                )
            return errors
        elapsed = time.monotonic() - started
        for c in missing:
            save_embeddings_npz(self.cache_path(c), produced[c.variant])
            self.records.append(
                {"abstraction": abstraction, "method": method, "variant": c.variant,
                 "status": "computed", "wall_time": elapsed / len(missing)}
            )
        return errors

    # -- per-method computation ------------------------------------------

    def _compute(self, abstraction: str, method: str, variants: list[str]) -> dict[str, list[Embedding]]:
        if abstraction == "sequence":
            return self._compute_sequence(method, variants)
        return self._compute_struct(abstraction, method, variants)

    def _compute_sequence(self, method: str, variants: list[str]) -> dict[str, list[Embedding]]:
        cfg = self.cfg
        ov = dict(cfg.overrides.get(method, {}))
        seqs = self.sequences()
        label = lambda v: f"sequence-{method}-{v}"
        if method in ("cbow", "glove"):
            train = train_cbow if method == "cbow" else train_glove
            table = train(seqs, self.vocab, dim=cfg.dim, **ov)
            tfidf = build_tfidf_stats(seqs, self.vocab)
            return {
                v: embed_sequences(
                    seqs, table, v, max_len=cfg.max_len, tfidf=tfidf, method=label(v)
                )
                for v in variants
            }
        encoder = self._train_transformer(method, ov)
        return {
            v: embed_sequences(seqs, encoder, v, max_len=cfg.max_len, method=label(v))
            for v in variants
        }

    def _train_transformer(self, method: str, ov: dict):
        cfg_kwargs = {k: ov.pop(k) for k in _TRANSFORMER_CFG_KEYS if k in ov}
        cfg_kwargs.setdefault("max_len", self.cfg.max_len)
        tcfg = TransformerConfig(out_dim=self.cfg.dim, **cfg_kwargs)
        simcse_kwargs = {
            k.removeprefix("simcse_"): ov.pop(k)
            for k in list(ov)
            if k in ("simcse_epochs", "simcse_lr", "temperature", "simcse_batch_size")
        }
        encoder = pretrain_transformer_mlm(
            self.sequences(), self.vocab, cfg=tcfg, seed=self.cfg.base_seed, **ov
        )
        if method == "simcse":
            train_simcse(
                encoder, self.sequences(), seed=self.cfg.base_seed, **simcse_kwargs
            )
        return encoder

    def _compute_struct(self, abstraction: str, method: str, variants: list[str]) -> dict[str, list[Embedding]]:
        cfg = self.cfg
        ov = dict(cfg.overrides.get(method, {}))
        structs = self.structs(abstraction)
        out: dict[str, list[Embedding]] = {}
        if method == "kernel":
            for v in variants:
                if v == "path":
                    m = path_kernel(structs, **ov)
                elif v == "walk":
                    m = random_walk_kernel(structs, seed=cfg.base_seed, **ov)
                else:
                    m = wl_subtree_kernel(structs, **ov)
                out[v] = _relabel(matrix_to_embeddings(m, d=cfg.dim), f"{abstraction}-kernel-{v}")
            return out
        if method in ("ged", "ted"):
            matrix = ged_matrix(structs, **ov) if method == "ged" else ted_matrix(structs, **ov)
            out[NO_VARIANT] = _relabel(
                matrix_to_embeddings(matrix, d=cfg.dim), f"{abstraction}-{method}"
            )
            return out
        if method == "graph2vec":
            embs = graph2vec(structs, dim=cfg.dim, seed=cfg.base_seed, **ov)
            out[NO_VARIANT] = _relabel(embs, f"{abstraction}-graph2vec")
            return out
        if method == "gnn":
            return {
                v: _relabel(self._gnn_embeddings(abstraction, structs, v, dict(ov)),
                            f"{abstraction}-gnn-{v}")
                for v in variants
            }
        raise ConfigError(f"no stage-1 route for method {method!r}")

    def _gnn_embeddings(self, abstraction: str, structs, kind: str, ov: dict) -> list[Embedding]:
        """Supervised training on the stage-1 stratified train split of the
        labeled samples, then inference over the whole dataset."""
        y = self.dataset.labels()
        labeled = np.flatnonzero(y != -1)
        tr, _te = stratified_split(y[labeled], seed=self.cfg.base_seed)
        train_idx = labeled[tr]
        model = train_gnn(
            [structs[i] for i in train_idx],
            y[train_idx],
            kind,
            dim=self.cfg.dim,
            seed=self.cfg.base_seed,
            **ov,
        )
        return embed_structs(model, structs)


def _relabel(embeddings: list[Embedding], method: str) -> list[Embedding]:
    return [
        Embedding(vector=e.vector, sample_id=e.sample_id, method=method)
        for e in embeddings
    ]


def _evaluate_cell(
    cfg: BenchConfig, dataset: Dataset, cell: Cell, classifier: str, emb_path: Path
) -> CellResult:
    started = time.monotonic()
    result = CellResult(
        dataset=dataset.name,
        abstraction=cell.abstraction,
        method=cell.method,
        variant=cell.variant,
        classifier=classifier,
    )
    try:
        embeddings = load_embeddings_npz(emb_path)
        emb_set = LabeledEmbeddingSet.from_embeddings(embeddings, dataset)
        report = run_protocol(
            emb_set,
            classifier,
            seeds=cfg.seeds,
            base_seed=cfg.base_seed,
            **cfg.eval_options,
        )
        result.metrics = {
            name: {
                "mean": report.mean(name),
                "std": report.std(name),
                "per_seed": list(values),
            }
            for name, values in report.per_seed.items()
        }
    except Exception as exc:
        log.exception("cell %s/%s failed", cell, classifier)
        result.status = "failed"
        result.error = f"{type(exc).__name__}: {exc}"
    result.wall_time = time.monotonic() - started
    return result


def run_benchmark(cfg: BenchConfig, resume: bool = False) -> BenchResultStore:
    """Execute the configured matrix; returns the result store after writing
    results.csv and results.json under cfg.out_dir."""
    out_dir = Path(cfg.out_dir)
    emb_dir = out_dir / "embeddings"
    emb_dir.mkdir(parents=True, exist_ok=True)
    dataset = _load_bench_dataset(cfg)
    log.info(
        "benchmark on %s: %d samples, %d families", dataset.name, *dataset.stats[:2]
    )
    stage1 = _Stage1(cfg, dataset, emb_dir, resume=resume)

    groups: dict[tuple[str, str], list[str]] = {}
    for cell in cfg.cells():
        groups.setdefault((cell.abstraction, cell.method), []).append(cell.variant)
    cell_errors: dict[Cell, str] = {}
    for (abstraction, method), variants in groups.items():
        cell_errors.update(stage1.run_group(abstraction, method, variants))

    jobs: list[tuple[Cell, str]] = [
        (cell, classifier) for cell in cfg.cells() for classifier in cfg.classifiers
    ]

    def run_job(job: tuple[Cell, str]) -> CellResult:
        cell, classifier = job
        if cell_errors.get(cell):
            return CellResult(
                dataset=dataset.name,
                abstraction=cell.abstraction,
                method=cell.method,
                variant=cell.variant,
                classifier=classifier,
                status="failed",
                error=cell_errors[cell],
            )
        return _evaluate_cell(cfg, dataset, cell, classifier, stage1.cache_path(cell))

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_job, jobs))
    else:
        results = [run_job(j) for j in jobs]

    store = BenchResultStore(
        dataset=dataset.name,
        config=cfg.to_dict(),
        results=results,
        stage1=stage1.records,
    )
    store.write(out_dir)
    return store
