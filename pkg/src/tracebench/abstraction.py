"""Abstractions of a raw trace: token sequence, call graph, call tree.

A flat trace alternates caller/callee tokens, so graph and tree builders
consume (caller, callee) pairs while the sequence view keeps the full flat
token list. All builders are pure functions of their input.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field

from .core import Trace, Vocabulary
from .errors import InvalidInput


@dataclass(frozen=True)
class TokenSequence:
    """Vocabulary ids in execution order; length equals the source trace."""

    tokens: tuple[int, ...]
    sample_id: str = ""

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class CallEvent:
    caller: str
    callee: str
    index: int


@dataclass
class CallGraph:
    """Directed graph over unique function names; edge weight = call frequency."""

    nodes: list[str]
    edges: dict[tuple[str, str], int]
    entry: str
    sample_id: str = ""

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def out_degree(self, node: str) -> int:
        return sum(1 for (u, _v) in self.edges if u == node)

    def in_degree(self, node: str) -> int:
        return sum(1 for (_u, v) in self.edges if v == node)

    def successors(self, node: str) -> list[str]:
        return [v for (u, v) in self.edges if u == node]

    def predecessors(self, node: str) -> list[str]:
        return [u for (u, v) in self.edges if v == node]


@dataclass
class TreeNode:
    label: str
    index: int  # event ordinal of the call creating this node; -1 for root/context
    children: list["TreeNode"] = field(default_factory=list)

    def iter_nodes(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass
class CallTree:
    """Rooted ordered tree; repeated calls in different contexts stay distinct."""

    root: TreeNode
    n_context_nodes: int = 0
    sample_id: str = ""

    @property
    def n_nodes(self) -> int:
        return sum(1 for _ in self.root.iter_nodes())

    def preorder_labels(self) -> list[str]:
        return [n.label for n in self.root.iter_nodes()]


def to_sequence(trace: Trace, vocab: Vocabulary) -> TokenSequence:
    """Map every call token to its vocabulary id, unknowns to [UNK]."""
    return TokenSequence(tokens=tuple(vocab.encode(trace.calls)), sample_id=trace.filemd5)


def pair_events(trace: Trace, odd_policy: str = "drop") -> list[CallEvent]:
    """Interpret the flat token list as consecutive (caller, callee) pairs.

    Odd-length traces either drop the final token with a warning (default) or
    are rejected when ``odd_policy="reject"``.
    """
    calls = trace.calls
    if len(calls) % 2 != 0:
        if odd_policy == "reject":
            raise InvalidInput(f"trace {trace.filemd5}: odd call count {len(calls)}")
        warnings.warn(
            f"trace {trace.filemd5}: odd call count, dropping final token",
            stacklevel=2,
        )
        calls = calls[:-1]
    return [
        CallEvent(caller=calls[2 * k], callee=calls[2 * k + 1], index=k)
        for k in range(len(calls) // 2)
    ]


def to_graph(events: list[CallEvent], sample_id: str = "") -> CallGraph:
    """Fold call events into a weighted directed graph; self-loops kept."""
    if not events:
        raise InvalidInput("to_graph requires at least one event")
    weights: Counter = Counter()
    nodes: dict[str, None] = {}
    for ev in events:
        weights[(ev.caller, ev.callee)] += 1
        nodes.setdefault(ev.caller)
        nodes.setdefault(ev.callee)
    entry = events[0].caller
    return CallGraph(
        nodes=list(nodes), edges=dict(weights), entry=entry, sample_id=sample_id
    )


def to_tree(
    events: list[CallEvent], max_depth: int = 512, sample_id: str = ""
) -> CallTree:
    """Reconstruct a rooted call tree from the event stream.

    A stack of open frames starts at a root labeled with the first caller. For
    event (c -> f) the stack is popped until its top is c; if no frame matches,
    a fresh child of the root labeled c is synthesized (re-rooted context) so
    the builder stays total over noisy streams. Children keep event order.
    Depth is capped: nodes at the cap are attached but never pushed.
    """
    if not events:
        raise InvalidInput("to_tree requires at least one event")
    root = TreeNode(label=events[0].caller, index=-1)
    stack: list[TreeNode] = [root]
    n_context = 0
    for ev in events:
        if not any(frame.label == ev.caller for frame in stack):
            context = TreeNode(label=ev.caller, index=-1)
            root.children.append(context)
            del stack[1:]
            stack.append(context)
            n_context += 1
        else:
            while stack[-1].label != ev.caller:
                stack.pop()
        node = TreeNode(label=ev.callee, index=ev.index)
        stack[-1].children.append(node)
        if len(stack) < max_depth:
            stack.append(node)
    return CallTree(root=root, n_context_nodes=n_context, sample_id=sample_id)


def collapse_tree(tree: CallTree) -> dict[tuple[str, str], int]:
    """Parent->child edge multiset keyed by function name; the graph/tree
    consistency oracle compares this against CallGraph edges."""
    out: Counter = Counter()
    for node in tree.root.iter_nodes():
        for child in node.children:
            if child.index >= 0:  # root->context attachments are not call events
                out[(node.label, child.label)] += 1
    return dict(out)


def graph_to_dot(graph: CallGraph, name: str = "fcg") -> str:
    lines = [f"digraph {name} {{"]
    ids = {label: f"n{i}" for i, label in enumerate(graph.nodes)}
    for label, nid in ids.items():
        shape = ", shape=box" if label == graph.entry else ""
        lines.append(f'  {nid} [label="{label}"{shape}];')
    for (u, v), w in sorted(graph.edges.items()):
        lines.append(f'  {ids[u]} -> {ids[v]} [label="{w}"];')
    lines.append("}")
    return "\n".join(lines)


def tree_to_dot(tree: CallTree, name: str = "fct") -> str:
    lines = [f"digraph {name} {{"]
    counter = [0]

    def walk(node: TreeNode) -> str:
        nid = f"n{counter[0]}"
        counter[0] += 1
        lines.append(f'  {nid} [label="{node.label}"];')
        for child in node.children:
            cid = walk(child)
            lines.append(f"  {nid} -> {cid};")
        return nid

    walk(tree.root)
    lines.append("}")
    return "\n".join(lines)
