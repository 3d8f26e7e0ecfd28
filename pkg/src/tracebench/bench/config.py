"""Benchmark configuration: the legal method/variant matrix and YAML loading.

Every run cell is (abstraction, method, variant). Sequence methods pair with
aggregation strategies, kernels with their substructure flavor, GNNs with a
layer kind; edit distances and graph2vec take the placeholder variant "-".
Illegal combinations are rejected at load time with the offending key path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import yaml

from ..errors import ConfigError
from ..evaluate import CLASSIFIERS

ABSTRACTIONS = ("sequence", "graph", "tree")

NO_VARIANT = "-"

LEGAL_MATRIX: dict[str, dict[str, tuple[str, ...]]] = {
    "sequence": {
        "cbow": ("avg", "concat", "concat_avg"),
        "glove": ("avg", "concat", "concat_avg"),
        "bert": ("avg", "layer_concat", "cls"),
        "simcse": ("avg", "layer_concat", "cls"),
    },
    "graph": {
        "kernel": ("path", "walk", "subtree"),
        "ged": (NO_VARIANT,),
        "gnn": ("gcn", "gat", "gin"),
        "graph2vec": (NO_VARIANT,),
    },
    "tree": {
        "kernel": ("path", "walk", "subtree"),
        "ted": (NO_VARIANT,),
        "gnn": ("gcn", "gat", "gin"),
        "graph2vec": (NO_VARIANT,),
    },
}

METHOD_NAMES = sorted({m for byabs in LEGAL_MATRIX.values() for m in byabs})

_TOP_KEYS = {
    "dataset",
    "out_dir",
    "seeds",
    "base_seed",
    "dim",
    "workers",
    "max_len",
    "min_count",
    "abstractions",
    "methods",
    "classifiers",
    "overrides",
    "eval",
}

_EVAL_KEYS = {"cluster_with_outliers", "score_outliers", "test_fraction"}


class Cell(NamedTuple):
    abstraction: str
    method: str
    variant: str


def default_methods(abstractions=ABSTRACTIONS) -> dict[str, dict[str, list[str]]]:
    """The full legal matrix restricted to the given abstractions."""
    return {
        a: {m: list(vs) for m, vs in LEGAL_MATRIX[a].items()}
        for a in abstractions
    }


@dataclass
class BenchConfig:
    dataset: dict
    out_dir: str = "bench-out"
    seeds: int = 10
    base_seed: int = 0
    dim: int = 128
    workers: int = 1
    max_len: int = 256
    min_count: int = 2
    abstractions: tuple[str, ...] = ABSTRACTIONS
    methods: dict = field(default_factory=dict)
    classifiers: tuple[str, ...] = tuple(CLASSIFIERS)
    overrides: dict = field(default_factory=dict)
    eval_options: dict = field(default_factory=dict)

    def __post_init__(self):
        self._validate_dataset()
        for name, value in (
            ("seeds", self.seeds),
            ("dim", self.dim),
            ("workers", self.workers),
            ("max_len", self.max_len),
            ("min_count", self.min_count),
        ):
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {value!r}")
        if not isinstance(self.base_seed, int) or self.base_seed < 0:
            raise ConfigError(f"base_seed: must be a non-negative integer, got {self.base_seed!r}")
        self.abstractions = tuple(self.abstractions)
        for i, a in enumerate(self.abstractions):
            if a not in ABSTRACTIONS:
                raise ConfigError(f"abstractions[{i}]: unknown abstraction {a!r}")
        if not self.abstractions:
            raise ConfigError("abstractions: must not be empty")
        if not self.methods:
            self.methods = default_methods(self.abstractions)
        self._validate_methods()
        self.classifiers = tuple(self.classifiers)
        for i, c in enumerate(self.classifiers):
            if c not in CLASSIFIERS:
                raise ConfigError(f"classifiers[{i}]: unknown classifier {c!r}")
        if not self.classifiers:
            raise ConfigError("classifiers: must not be empty")
        for key in self.overrides:
            if key not in METHOD_NAMES:
                raise ConfigError(f"overrides.{key}: unknown method name")
            if not isinstance(self.overrides[key], dict):
                raise ConfigError(f"overrides.{key}: must be a mapping")
        for key in self.eval_options:
            if key not in _EVAL_KEYS:
                raise ConfigError(f"eval.{key}: unknown option")

    def _validate_dataset(self):
        if not isinstance(self.dataset, dict):
            raise ConfigError("dataset: must be a mapping")
        sources = [k for k in ("path", "recipe", "recipe_file") if k in self.dataset]
        if len(sources) != 1:
            raise ConfigError(
                "dataset: exactly one of 'path', 'recipe', 'recipe_file' required, "
                f"got {sources or 'none'}"
            )
        extra = set(self.dataset) - {"path", "recipe", "recipe_file", "name"}
        if extra:
            raise ConfigError(f"dataset.{sorted(extra)[0]}: unknown key")

    def _validate_methods(self):
        if not isinstance(self.methods, dict):
            raise ConfigError("methods: must be a mapping")
        for a, by_method in self.methods.items():
            if a not in LEGAL_MATRIX:
                raise ConfigError(f"methods.{a}: unknown abstraction")
            if a not in self.abstractions:
                raise ConfigError(f"methods.{a}: abstraction not enabled")
            if not isinstance(by_method, dict):
                raise ConfigError(f"methods.{a}: must be a mapping")
            for m, variants in by_method.items():
                if m not in LEGAL_MATRIX[a]:
                    raise ConfigError(f"methods.{a}.{m}: unknown method for this abstraction")
                if isinstance(variants, str):
                    raise ConfigError(f"methods.{a}.{m}: variants must be a list")
                for i, v in enumerate(variants):
                    if v not in LEGAL_MATRIX[a][m]:
                        raise ConfigError(
                            f"methods.{a}.{m}[{i}]: variant {v!r} not legal; "
                            f"expected one of {LEGAL_MATRIX[a][m]}"
                        )

    def cells(self) -> list[Cell]:
        out = []
        for a in self.abstractions:
            for m, variants in self.methods.get(a, {}).items():
                for v in variants:
                    out.append(Cell(a, m, v))
        return out

    @property
    def dataset_name(self) -> str:
        if "name" in self.dataset:
            return str(self.dataset["name"])
        for key in ("recipe", "recipe_file", "path"):
            if key in self.dataset:
                return Path(str(self.dataset[key])).stem
        return "dataset"

    def to_dict(self) -> dict:
        return {
            "dataset": dict(self.dataset),
            "out_dir": self.out_dir,
            "seeds": self.seeds,
            "base_seed": self.base_seed,
            "dim": self.dim,
            "workers": self.workers,
            "max_len": self.max_len,
            "min_count": self.min_count,
            "abstractions": list(self.abstractions),
            "methods": {a: {m: list(v) for m, v in by.items()} for a, by in self.methods.items()},
            "classifiers": list(self.classifiers),
            "overrides": self.overrides,
            "eval": self.eval_options,
        }


def load_config(path: str | Path) -> BenchConfig:
    """Parse and validate a YAML benchmark configuration."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown configuration key")
    if "dataset" not in raw:
        raise ConfigError("dataset: required key missing")
    kwargs = dict(raw)
    kwargs["eval_options"] = kwargs.pop("eval", {})
    return BenchConfig(**kwargs)
