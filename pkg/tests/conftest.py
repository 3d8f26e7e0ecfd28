"""Shared fixtures: the worked-example trace, structure builders, gradcheck."""

from __future__ import annotations

import numpy as np
import pytest

from tracebench import autodiff as ad
from tracebench.abstraction import CallGraph, CallTree, TreeNode
from tracebench.core import Trace

# The published example trace: alternating caller/callee tokens, 14 in all.
TABLE1_CALLS = (
    "_main_", "zend_compile_file",
    "_main_", "base64_decode",
    "_main_", "assert",
    "assert", "zend_compile_string",
    "assert", "zend_fetch_r_post",
    "assert", "eval",
    "eval", "zend_compile_string",
)

TABLE1_EVENTS = (
    ("_main_", "zend_compile_file"),
    ("_main_", "base64_decode"),
    ("_main_", "assert"),
    ("assert", "zend_compile_string"),
    ("assert", "zend_fetch_r_post"),
    ("assert", "eval"),
    ("eval", "zend_compile_string"),
)


def md5_of(tag: str) -> str:
    """Deterministic 32-char lowercase hex id for fixtures."""
    import hashlib

    return hashlib.md5(tag.encode("utf-8")).hexdigest()


@pytest.fixture
def table1_trace() -> Trace:
    return Trace(filemd5=md5_of("table1"), calls=TABLE1_CALLS, family=1)


def make_graph(edges, entry=None, sample_id="g") -> CallGraph:
    """CallGraph from {(u, v): w} or an edge list (unit weights, folded)."""
    if not isinstance(edges, dict):
        folded: dict[tuple[str, str], int] = {}
        for u, v in edges:
            folded[(u, v)] = folded.get((u, v), 0) + 1
        edges = folded
    nodes: list[str] = []
    for u, v in edges:
        for x in (u, v):
            if x not in nodes:
                nodes.append(x)
    if entry is None:
        entry = nodes[0] if nodes else "root"
    if entry not in nodes:
        nodes.insert(0, entry)
    return CallGraph(nodes=nodes, edges=dict(edges), entry=entry, sample_id=sample_id)


def make_tree(spec, sample_id="t") -> CallTree:
    """CallTree from nested (label, [children]) tuples; a bare str is a leaf."""
    counter = [0]

    def build(node) -> TreeNode:
        if isinstance(node, str):
            node = (node, [])
        label, children = node
        tn = TreeNode(label=label, index=counter[0])
        counter[0] += 1
        tn.children = [build(c) for c in children]
        return tn

    root = build(spec)
    root.index = -1
    return CallTree(root=root, sample_id=sample_id)


def gaussian_blobs(n_per: int, centers, spread: float = 0.05, seed: int = 0):
    """Well-separated labeled point clouds; families numbered from 1."""
    rng = np.random.default_rng(seed)
    X, y = [], []
    for label, c in enumerate(centers, start=1):
        c = np.asarray(c, dtype=np.float64)
        X.append(rng.normal(loc=c, scale=spread, size=(n_per, c.size)))
        y.extend([label] * n_per)
    return np.vstack(X), np.array(y, dtype=np.int64)


def fd_gradcheck(build_loss, params, eps: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    ``build_loss`` must rebuild the graph from the live parameter data on
    every call and return a scalar loss tensor. The relative error uses
    rel = |fd - g| / max(1, |fd|, |g|) so roundoff floors on near-zero
    gradients do not register as failures.
    """
    for p in params:
        p.zero_grad()
    loss = build_loss()
    ad.backward(loss)
    grads = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(build_loss().data)
            flat[i] = orig - eps
            lo = float(build_loss().data)
            flat[i] = orig
            fd = (hi - lo) / (2.0 * eps)
            rel = abs(fd - gflat[i]) / max(1.0, abs(fd), abs(gflat[i]))
            worst = max(worst, rel)
    return worst
