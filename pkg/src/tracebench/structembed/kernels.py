"""Graph/tree kernels: WL subtree, simple-path, and sampled random walks.

All kernels operate on node labels only; edge weights are ignored. Each
returns a normalized Gram matrix K_hat = K / sqrt(K_gg * K_g'g').
"""

from __future__ import annotations

from collections import Counter
from typing import Sequence

import numpy as np

from ..abstraction import CallGraph, CallTree
from ..errors import InvalidInput, KernelOverflow
from .matrix import SimilarityMatrix

Struct = CallGraph | CallTree


def _wl_view(struct: Struct) -> tuple[list[str], list[list[int]]]:
    """Labels plus WL neighbor lists: out+in for graphs, children for trees."""
    if isinstance(struct, CallGraph):
        labels = list(struct.nodes)
        index = {lab: i for i, lab in enumerate(labels)}
        neigh: list[list[int]] = [[] for _ in labels]
        for (u, v) in struct.edges:
            neigh[index[u]].append(index[v])
            neigh[index[v]].append(index[u])
        return labels, neigh
    if isinstance(struct, CallTree):
        nodes = list(struct.root.iter_nodes())
        pos = {id(n): i for i, n in enumerate(nodes)}
        labels = [n.label for n in nodes]
        neigh = [[pos[id(c)] for c in n.children] for n in nodes]
        return labels, neigh
    raise InvalidInput(f"unsupported structure type {type(struct).__name__}")


def _directed_view(struct: Struct) -> tuple[list[str], list[list[int]]]:
    """Labels plus directed adjacency (call direction / parent-to-child)."""
    if isinstance(struct, CallGraph):
        labels = list(struct.nodes)
        index = {lab: i for i, lab in enumerate(labels)}
        out: list[list[int]] = [[] for _ in labels]
        for (u, v) in struct.edges:
            out[index[u]].append(index[v])
        return labels, out
    if isinstance(struct, CallTree):
        nodes = list(struct.root.iter_nodes())
        pos = {id(n): i for i, n in enumerate(nodes)}
        labels = [n.label for n in nodes]
        out = [[pos[id(c)] for c in n.children] for n in nodes]
        return labels, out
    raise InvalidInput(f"unsupported structure type {type(struct).__name__}")


def _struct_id(struct: Struct, i: int) -> str:
    return getattr(struct, "sample_id", "") or f"struct-{i}"


def _check_nonempty(structs: Sequence[Struct]) -> None:
    if not structs:
        raise InvalidInput("no structures supplied")
    for i, s in enumerate(structs):
        n = s.n_nodes
        if n == 0:
            raise InvalidInput(f"empty structure at position {i}")


def wl_features(structs: Sequence[Struct], h: int = 5) -> list[Counter]:
    """Per-structure WL feature counters over iterations 0..h.

    Label dictionaries are shared across the whole batch per iteration, so
    counts align between structures; feature keys are (iteration, label id).
    Iteration-0 labels are the raw function names; each relabeling round is
    injective.
    """
    _check_nonempty(structs)
    prepared = [_wl_view(s) for s in structs]
    feats: list[Counter] = [Counter() for _ in structs]
    dict0: dict[str, int] = {}
    current: list[list[int]] = []
    for si, (labels, _) in enumerate(prepared):
        ids = []
        for lab in labels:
            if lab not in dict0:
                dict0[lab] = len(dict0)
            ids.append(dict0[lab])
        current.append(ids)
        feats[si].update((0, i) for i in ids)
    for it in range(1, h + 1):
        table: dict[tuple, int] = {}
        nxt: list[list[int]] = []
        for si, (_, neigh) in enumerate(prepared):
            ids = current[si]
            new_ids = []
            for v in range(len(ids)):
                key = (ids[v], tuple(sorted(ids[u] for u in neigh[v])))
                if key not in table:
                    table[key] = len(table)
                new_ids.append(table[key])
            nxt.append(new_ids)
            feats[si].update((it, i) for i in new_ids)
        current = nxt
    return feats


def _inner(a: Counter, b: Counter) -> float:
    if len(b) < len(a):
        a, b = b, a
    return float(sum(c * b[k] for k, c in a.items() if k in b))


def _normalized_gram(
    feats: list[Counter], structs: Sequence[Struct], method: str
) -> SimilarityMatrix:
    n = len(feats)
    K = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i, n):
            K[i, j] = K[j, i] = _inner(feats[i], feats[j])
    diag = np.sqrt(np.diagonal(K))
    K = K / np.outer(diag, diag)
    np.fill_diagonal(K, 1.0)
    ids = [_struct_id(s, i) for i, s in enumerate(structs)]
    return SimilarityMatrix(values=K, kind="kernel", method=method, sample_ids=ids)


def wl_subtree_kernel(structs: Sequence[Struct], h: int = 5) -> SimilarityMatrix:
    """Sum over iterations of compressed-label count inner products, normalized."""
    return _normalized_gram(wl_features(structs, h=h), structs, "wl_subtree")


def path_kernel(
    structs: Sequence[Struct], max_len: int = 4, path_limit: int = 1_000_000
) -> SimilarityMatrix:
    """Counts of simple directed label paths of 1..max_len nodes, normalized."""
    _check_nonempty(structs)
    feats = []
    for i, s in enumerate(structs):
        labels, out = _directed_view(s)
        counter: Counter = Counter()
        n_paths = 0
        for start in range(len(labels)):
            stack: list[tuple[int, tuple[str, ...], frozenset]] = [
                (start, (labels[start],), frozenset([start]))
            ]
            while stack:
                v, lpath, visited = stack.pop()
                counter[lpath] += 1
                n_paths += 1
                if n_paths > path_limit:
                    raise KernelOverflow(
                        f"{_struct_id(s, i)}: path enumeration exceeded {path_limit}"
                    )
                if len(lpath) < max_len:
                    for u in out[v]:
                        if u not in visited:
                            stack.append((u, lpath + (labels[u],), visited | {u}))
        feats.append(counter)
    return _normalized_gram(feats, structs, "path")


def random_walk_kernel(
    structs: Sequence[Struct],
    walk_len: int = 10,
    n_walks: int = 1000,
    seed: int = 0,
) -> SimilarityMatrix:
    """Sampled walk-label histograms, inner product normalized.

    Every structure draws from a fresh generator with the same seed, so
    identical structures produce identical histograms. Walks restart at a
    uniform random node when they hit a sink.
    """
    _check_nonempty(structs)
    feats = []
    for s in structs:
        labels, out = _directed_view(s)
        n = len(labels)
        rng = np.random.default_rng(seed)
        hist: Counter = Counter()
        for _ in range(n_walks):
            v = int(rng.integers(n))
            walk = [labels[v]]
            while len(walk) < walk_len:
                if out[v]:
                    v = out[v][int(rng.integers(len(out[v])))]
                else:
                    v = int(rng.integers(n))
                walk.append(labels[v])
            hist[tuple(walk)] += 1
        feats.append(hist)
    return _normalized_gram(feats, structs, "walk")
