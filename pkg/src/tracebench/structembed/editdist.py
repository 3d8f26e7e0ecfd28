"""Edit distances: bipartite-approximate GED and exact ordered-tree TED."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..abstraction import CallGraph, CallTree, TreeNode
from ..errors import InvalidInput
from .matrix import SimilarityMatrix

_INF = 1e9


def _graph_arrays(g: CallGraph) -> tuple[list[str], set[tuple[int, int]], np.ndarray, np.ndarray]:
    index = {lab: i for i, lab in enumerate(g.nodes)}
    edges = {(index[u], index[v]) for (u, v) in g.edges}
    n = len(g.nodes)
    dout = np.zeros(n)
    din = np.zeros(n)
    for (u, v) in edges:
        dout[u] += 1
        din[v] += 1
    return list(g.nodes), edges, dout, din


def graph_edit_distance(
    a: CallGraph, b: CallGraph, costs: Sequence[float] = (1, 1, 1, 1, 1, 1)
) -> float:
    """Bipartite GED: Hungarian node assignment, induced edit cost returned.

    Costs are (node_sub, node_del, node_ins, edge_sub, edge_del, edge_ins).
    The assignment matrix uses label substitution cost plus half the absolute
    out/in-degree differences as the local edge term; the returned value is
    the cost of the edit script induced by the assignment, an upper bound of
    exact GED. Edge weights are ignored, and edge substitution never fires
    because edges carry no labels.
    """
    if len(costs) != 6:
        raise InvalidInput(f"cost vector must have 6 entries, got {len(costs)}")
    c_nsub, c_ndel, c_nins, c_esub, c_edel, c_eins = (float(c) for c in costs)
    la, ea, douta, dina = _graph_arrays(a)
    lb, eb, doutb, dinb = _graph_arrays(b)
    n, m = len(la), len(lb)

    C = np.zeros((n + m, m + n))
    for i in range(n):
        for j in range(m):
            sub = 0.0 if la[i] == lb[j] else c_nsub
            local = 0.5 * (abs(douta[i] - doutb[j]) + abs(dina[i] - dinb[j]))
            C[i, j] = sub + local * (c_edel + c_eins) / 2.0
    # Ties break toward substitutions: at equal assignment cost a mapping
    # induces a far cheaper edit script than a delete-plus-insert pair. The
    # nudge only perturbs the assignment; the returned total uses true costs.
    tie = 1e-7
    C[:n, m:] = _INF
    for i in range(n):
        C[i, m + i] = c_ndel + tie
    C[n:, :m] = _INF
    for j in range(m):
        C[n + j, j] = c_nins + tie
    C[n:, m:] = 0.0

    rows, cols = linear_sum_assignment(C)
    phi: dict[int, int | None] = {}
    inserted: set[int] = set()
    for r, c in zip(rows, cols):
        if r < n:
            phi[r] = c if c < m else None
        elif c < m:
            inserted.add(c)

    total = 0.0
    for i in range(n):
        j = phi[i]
        if j is None:
            total += c_ndel
        elif la[i] != lb[j]:
            total += c_nsub
    total += c_nins * len(inserted)

    mapped = {i: j for i, j in phi.items() if j is not None}
    inv = {j: i for i, j in mapped.items()}
    for (u, v) in ea:
        j_u, j_v = phi.get(u), phi.get(v)
        if j_u is None or j_v is None or (j_u, j_v) not in eb:
            total += c_edel
    for (p, q) in eb:
        i_p, i_q = inv.get(p), inv.get(q)
        if i_p is None or i_q is None or (i_p, i_q) not in ea:
            total += c_eins
    return float(total)


def _tree_depth(root: TreeNode) -> int:
    best = 1
    stack = [(root, 1)]
    while stack:
        node, d = stack.pop()
        best = max(best, d)
        for c in node.children:
            stack.append((c, d + 1))
    return best


def _postorder(root: TreeNode) -> tuple[list[str], list[int]]:
    """Postorder labels (1-indexed externally) and leftmost-leaf indices."""
    labels: list[str] = []
    lmost: list[int] = []
    # (node, child cursor, leftmost-so-far or 0)
    stack: list[list] = [[root, 0, 0]]
    while stack:
        frame = stack[-1]
        node, cursor, lm = frame
        if cursor < len(node.children):
            frame[1] += 1
            stack.append([node.children[cursor], 0, 0])
        else:
            stack.pop()
            labels.append(node.label)
            idx = len(labels)  # 1-based postorder index
            own_l = lm if lm else idx
            lmost.append(own_l)
            if stack:
                parent = stack[-1]
                if parent[2] == 0:
                    parent[2] = own_l
    return labels, lmost


def tree_edit_distance(
    a: CallTree,
    b: CallTree,
    del_cost: float = 1.0,
    ins_cost: float = 1.0,
    sub_cost: float = 1.0,
    depth_cap: int = 512,
) -> float:
    """Exact ordered-tree edit distance (keyroot/forest dynamic program)."""
    for t in (a, b):
        d = _tree_depth(t.root)
        if d > depth_cap:
            raise InvalidInput(f"tree depth {d} exceeds cap {depth_cap}")
    la, lma = _postorder(a.root)
    lb, lmb = _postorder(b.root)
    n, m = len(la), len(lb)

    def keyroots(lmost: list[int]) -> list[int]:
        last: dict[int, int] = {}
        for i, l in enumerate(lmost, start=1):
            last[l] = i
        return sorted(last.values())

    kra, krb = keyroots(lma), keyroots(lmb)
    td = np.zeros((n + 1, m + 1))

    for i in kra:
        for j in krb:
            li, lj = lma[i - 1], lmb[j - 1]
            w, h = i - li + 2, j - lj + 2
            fd = np.zeros((w, h))
            for x in range(1, w):
                fd[x, 0] = fd[x - 1, 0] + del_cost
            for y in range(1, h):
                fd[0, y] = fd[0, y - 1] + ins_cost
            for x in range(1, w):
                ia = li + x - 1
                for y in range(1, h):
                    jb = lj + y - 1
                    if lma[ia - 1] == li and lmb[jb - 1] == lj:
                        c_sub = 0.0 if la[ia - 1] == lb[jb - 1] else sub_cost
                        fd[x, y] = min(
                            fd[x - 1, y] + del_cost,
                            fd[x, y - 1] + ins_cost,
                            fd[x - 1, y - 1] + c_sub,
                        )
                        td[ia, jb] = fd[x, y]
                    else:
                        fd[x, y] = min(
                            fd[x - 1, y] + del_cost,
                            fd[x, y - 1] + ins_cost,
                            fd[lma[ia - 1] - li, lmb[jb - 1] - lj] + td[ia, jb],
                        )
    return float(td[n, m])


def _pairwise_distance(
    structs: Sequence, fn, method: str
) -> SimilarityMatrix:
    if not structs:
        raise InvalidInput("no structures supplied")
    n = len(structs)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = fn(structs[i], structs[j])
    ids = [getattr(s, "sample_id", "") or f"struct-{i}" for i, s in enumerate(structs)]
    return SimilarityMatrix(values=D, kind="distance", method=method, sample_ids=ids)


def ged_matrix(
    graphs: Sequence[CallGraph], costs: Sequence[float] = (1, 1, 1, 1, 1, 1)
) -> SimilarityMatrix:
    """Pairwise bipartite GED; upper triangle mirrored so the matrix is symmetric."""
    return _pairwise_distance(graphs, lambda x, y: graph_edit_distance(x, y, costs), "ged")


def ted_matrix(trees: Sequence[CallTree], depth_cap: int = 512) -> SimilarityMatrix:
    return _pairwise_distance(
        trees, lambda x, y: tree_edit_distance(x, y, depth_cap=depth_cap), "ted"
    )
