"""Shared domain types: traces, vocabulary, datasets, embeddings."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInput

PAD, CLS, MASK, UNK = "[PAD]", "[CLS]", "[MASK]", "[UNK]"
RESERVED_TOKENS = (PAD, CLS, MASK, UNK)
PAD_ID, CLS_ID, MASK_ID, UNK_ID = 0, 1, 2, 3

PROVENANCES = ("real", "synthetic-intra", "synthetic-blend")


@dataclass(frozen=True)
class Trace:
    """One sample: an ordered function-call token list plus identity and label.

    ``family`` is -1 for outliers, otherwise a positive integer family id.
    """

    filemd5: str
    calls: tuple[str, ...]
    family: int
    provenance: str = "real"

    def __post_init__(self):
        if not self.filemd5:
            raise InvalidInput("trace requires a non-empty filemd5")
        if not isinstance(self.calls, tuple):
            object.__setattr__(self, "calls", tuple(self.calls))
        if len(self.calls) == 0:
            raise InvalidInput(f"trace {self.filemd5}: calls must be non-empty")
        for tok in self.calls:
            if not tok or any(ch.isspace() for ch in tok):
                raise InvalidInput(
                    f"trace {self.filemd5}: token {tok!r} is empty or contains whitespace"
                )
        if self.family != -1 and self.family < 1:
            raise InvalidInput(
                f"trace {self.filemd5}: family must be -1 or a positive integer, got {self.family}"
            )
        if self.provenance not in PROVENANCES:
            raise InvalidInput(
                f"trace {self.filemd5}: unknown provenance {self.provenance!r}"
            )

    def to_json(self) -> str:
        return json.dumps(
            {
                "filemd5": self.filemd5,
                "calls": list(self.calls),
                "family": self.family,
                "provenance": self.provenance,
            },
            sort_keys=True,
        )


class Vocabulary:
    """Bijective token <-> dense id map with reserved special tokens.

    Ids 0..3 are [PAD], [CLS], [MASK], [UNK]; real tokens follow, ordered by
    descending corpus frequency with lexicographic tie-break so the mapping is
    deterministic. Tokens seen fewer than ``min_count`` times map to [UNK].
    """

    def __init__(self, counts: Counter, min_count: int = 2):
        self.min_count = int(min_count)
        self.counts: dict[str, int] = dict(counts)
        kept = sorted(
            (t for t, c in counts.items() if c >= self.min_count),
            key=lambda t: (-counts[t], t),
        )
        self.tokens: list[str] = list(RESERVED_TOKENS) + kept
        self._index: dict[str, int] = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index and token not in RESERVED_TOKENS

    @property
    def n_real(self) -> int:
        return len(self.tokens) - len(RESERVED_TOKENS)

    def id_of(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    def encode(self, calls: Sequence[str]) -> list[int]:
        return [self.id_of(t) for t in calls]

    def frequency_of(self, token_id: int) -> int:
        """Corpus frequency behind an id; [UNK] pools every collapsed token."""
        token = self.tokens[token_id]
        if token == UNK:
            return sum(c for t, c in self.counts.items() if c < self.min_count)
        return self.counts.get(token, 0)


def build_vocabulary(traces: Sequence[Trace], min_count: int = 2) -> Vocabulary:
    """Count tokens over every trace (outliers included) and freeze the id map."""
    if not traces:
        raise InvalidInput("build_vocabulary requires at least one trace")
    counts: Counter = Counter()
    for tr in traces:
        counts.update(tr.calls)
    return Vocabulary(counts, min_count=min_count)


@dataclass(frozen=True)
class Dataset:
    """A named collection of traces with unique filemd5 keys."""

    name: str
    traces: tuple[Trace, ...]

    def __post_init__(self):
        if not isinstance(self.traces, tuple):
            object.__setattr__(self, "traces", tuple(self.traces))
        seen: set[str] = set()
        for tr in self.traces:
            if tr.filemd5 in seen:
                raise InvalidInput(f"duplicate filemd5 in dataset: {tr.filemd5}")
            seen.add(tr.filemd5)

    def __len__(self) -> int:
        return len(self.traces)

    @property
    def stats(self) -> tuple[int, int, int]:
        return dataset_stats(self)

    @property
    def families(self) -> list[int]:
        """Distinct positive family ids, sorted ascending."""
        return sorted({tr.family for tr in self.traces if tr.family != -1})

    def labels(self) -> np.ndarray:
        return np.array([tr.family for tr in self.traces], dtype=np.int64)


def dataset_stats(ds: Dataset) -> tuple[int, int, int]:
    """(n_samples, n_families excluding outliers, n_outliers)."""
    families = {tr.family for tr in ds.traces if tr.family != -1}
    n_outliers = sum(1 for tr in ds.traces if tr.family == -1)
    return (len(ds.traces), len(families), n_outliers)


@dataclass(frozen=True)
class Embedding:
    """Fixed-dimensional representation of one sample."""

    vector: np.ndarray
    sample_id: str
    method: str = ""

    def __post_init__(self):
        vec = np.asarray(self.vector)
        if vec.ndim != 1:
            raise InvalidInput(f"embedding for {self.sample_id} must be 1-D")
        if not np.all(np.isfinite(vec)):
            raise InvalidInput(f"embedding for {self.sample_id} contains NaN/Inf")
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


def save_jsonl(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for tr in ds.traces:
            fh.write(tr.to_json() + "\n")


def load_jsonl(path: str | Path, name: str | None = None) -> Dataset:
    """Strict loader for files this package wrote; tolerant parsing lives in ingest."""
    path = Path(path)
    traces = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            traces.append(
                Trace(
                    filemd5=obj["filemd5"],
                    calls=tuple(obj["calls"]),
                    family=int(obj.get("family", -1)),
                    provenance=obj.get("provenance", "real"),
                )
            )
    return Dataset(name=name or path.stem, traces=tuple(traces))


def embeddings_to_matrix(embeddings: Iterable[Embedding]) -> tuple[np.ndarray, list[str]]:
    """Stack embeddings row-wise, returning the matrix and aligned sample ids."""
    embs = list(embeddings)
    if not embs:
        return np.zeros((0, 0)), []
    dims = {e.dim for e in embs}
    if len(dims) != 1:
        raise InvalidInput(f"mixed embedding dims: {sorted(dims)}")
    X = np.stack([e.vector for e in embs]).astype(np.float64)
    return X, [e.sample_id for e in embs]
