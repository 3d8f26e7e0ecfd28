"""Graph neural networks over call graphs and call trees.

Three propagation rules (GCN, GAT, GIN) share one batching scheme: node
labels index a learned embedding table, structures in a minibatch are
disjointly concatenated, and mean pooling per structure feeds a two-layer
classification head. The penultimate head activation is the embedding
exposed to downstream classifiers.

Trees contribute parent-to-child edges; every edge also gets its reverse
so information flows both ways. Edge weights only affect GCN, which
normalizes them symmetrically; GAT and GIN treat edges as unweighted.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import autodiff as ad
from ..abstraction import CallGraph, CallTree
from ..core import Embedding
from ..errors import InvalidConfig, InvalidInput, InvalidState
from .kernels import Struct, _check_nonempty, _struct_id

log = logging.getLogger(__name__)

KINDS = ("gcn", "gat", "gin")

_EMBED_DIM = 128


@dataclass
class _StructArrays:
    """Per-structure node/edge arrays, cached once before training."""

    node_ids: np.ndarray  # (n,) label-table rows, 0 = unseen
    src: np.ndarray  # (e,) bidirectional edge sources
    dst: np.ndarray  # (e,)
    weight: np.ndarray  # (e,) float64


@dataclass
class _Batch:
    node_ids: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    graph_id: np.ndarray
    n_graphs: int


def _extract(struct: Struct, label_index: dict[str, int]) -> _StructArrays:
    if isinstance(struct, CallGraph):
        labels = list(struct.nodes)
        pos = {lab: i for i, lab in enumerate(labels)}
        raw = [(pos[u], pos[v], float(w)) for (u, v), w in struct.edges.items()]
    elif isinstance(struct, CallTree):
        nodes = list(struct.root.iter_nodes())
        pos = {id(n): i for i, n in enumerate(nodes)}
        labels = [n.label for n in nodes]
        raw = [
            (pos[id(n)], pos[id(c)], 1.0) for n in nodes for c in n.children
        ]
    else:
        raise InvalidInput(f"unsupported structure type {type(struct).__name__}")
    src, dst, wgt = [], [], []
    for s, d, w in raw:
        src.append(s)
        dst.append(d)
        wgt.append(w)
        if s != d:
            src.append(d)
            dst.append(s)
            wgt.append(w)
    ids = np.array([label_index.get(lab, 0) for lab in labels], dtype=np.int64)
    return _StructArrays(
        node_ids=ids,
        src=np.array(src, dtype=np.int64),
        dst=np.array(dst, dtype=np.int64),
        weight=np.array(wgt, dtype=np.float64),
    )


def _combine(arrays: Sequence[_StructArrays]) -> _Batch:
    node_ids, src, dst, wgt, gid = [], [], [], [], []
    offset = 0
    for g, arr in enumerate(arrays):
        n = len(arr.node_ids)
        node_ids.append(arr.node_ids)
        src.append(arr.src + offset)
        dst.append(arr.dst + offset)
        wgt.append(arr.weight)
        gid.append(np.full(n, g, dtype=np.int64))
        offset += n
    return _Batch(
        node_ids=np.concatenate(node_ids),
        src=np.concatenate(src),
        dst=np.concatenate(dst),
        weight=np.concatenate(wgt),
        graph_id=np.concatenate(gid),
        n_graphs=len(arrays),
    )


def _gcn_coefficients(batch: _Batch) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric normalization with implicit self-loops of weight 1."""
    n = len(batch.node_ids)
    deg = np.ones(n, dtype=np.float64)
    np.add.at(deg, batch.src, batch.weight)
    edge = batch.weight / np.sqrt(deg[batch.src] * deg[batch.dst])
    return edge[:, None], (1.0 / deg)[:, None]


class GnnModel:
    """Message-passing classifier; `kind` selects the propagation rule."""

    def __init__(
        self,
        kind: str,
        n_classes: int,
        label_index: dict[str, int],
        dim: int = 128,
        n_layers: int = 3,
        dropout: float = 0.5,
        heads: int = 4,
        seed: int = 0,
    ):
        if kind not in KINDS:
            raise InvalidConfig(f"unknown gnn kind {kind!r}; expected one of {KINDS}")
        if n_classes < 2:
            raise InvalidInput(f"need at least 2 classes, got {n_classes}")
        if n_layers < 1:
            raise InvalidConfig("n_layers must be >= 1")
        if not 0.0 <= dropout < 1.0:
            raise InvalidConfig(f"dropout must be in [0, 1), got {dropout}")
        if kind == "gat" and dim % heads != 0:
            raise InvalidConfig(f"dim {dim} not divisible by heads {heads}")
        self.kind = kind
        self.n_classes = n_classes
        self.label_index = dict(label_index)
        self.dim = dim
        self.n_layers = n_layers
        self.dropout = dropout
        self.heads = heads
        self.classes_: np.ndarray | None = None
        self.history: dict[str, list[float]] = {}

        rng = np.random.default_rng(seed)

        def glorot(n_in: int, n_out: int) -> ad.Tensor:
            limit = np.sqrt(6.0 / (n_in + n_out))
            return ad.parameter(
                rng.uniform(-limit, limit, size=(n_in, n_out)), dtype=np.float64
            )

        p: dict[str, ad.Tensor] = {}
        p["node_emb"] = ad.parameter(
            rng.normal(0.0, 0.1, size=(len(label_index) + 1, dim)), dtype=np.float64
        )
        for l in range(n_layers):
            if kind == "gin":
                p[f"l{l}.w1"] = glorot(dim, dim)
                p[f"l{l}.b1"] = ad.parameter(np.zeros(dim), dtype=np.float64)
                p[f"l{l}.w2"] = glorot(dim, dim)
                p[f"l{l}.b2"] = ad.parameter(np.zeros(dim), dtype=np.float64)
                p[f"l{l}.eps"] = ad.parameter(np.zeros(1), dtype=np.float64)
            else:
                p[f"l{l}.w"] = glorot(dim, dim)
                p[f"l{l}.b"] = ad.parameter(np.zeros(dim), dtype=np.float64)
                if kind == "gat":
                    p[f"l{l}.asrc"] = ad.parameter(
                        rng.uniform(-0.1, 0.1, size=(heads, dim // heads)),
                        dtype=np.float64,
                    )
                    p[f"l{l}.adst"] = ad.parameter(
                        rng.uniform(-0.1, 0.1, size=(heads, dim // heads)),
                        dtype=np.float64,
                    )
        p["head.w1"] = glorot(dim, _EMBED_DIM)
        p["head.b1"] = ad.parameter(np.zeros(_EMBED_DIM), dtype=np.float64)
        p["head.w2"] = glorot(_EMBED_DIM, n_classes)
        p["head.b2"] = ad.parameter(np.zeros(n_classes), dtype=np.float64)
        self.params = p

    # -- propagation rules ------------------------------------------------

    def _gcn_layer(self, l: int, x: ad.Tensor, batch: _Batch, coefs) -> ad.Tensor:
        edge_coef, self_coef = coefs
        xw = ad.matmul(x, self.params[f"l{l}.w"])
        own = ad.mul(xw, ad.constant(self_coef, dtype=np.float64))
        n = len(batch.node_ids)
        if len(batch.src):
            msgs = ad.mul(
                ad.embedding_lookup(xw, batch.src),
                ad.constant(edge_coef, dtype=np.float64),
            )
            own = ad.add(own, ad.scatter_add(msgs, batch.dst, n))
        return ad.add(own, self.params[f"l{l}.b"])

    def _gat_layer(self, l: int, x: ad.Tensor, batch: _Batch) -> ad.Tensor:
        n = len(batch.node_ids)
        h = self.heads
        dh = self.dim // h
        # Self-loops let every node attend to itself; edge weights ignored.
        src = np.concatenate([batch.src, np.arange(n, dtype=np.int64)])
        dst = np.concatenate([batch.dst, np.arange(n, dtype=np.int64)])
        xw = ad.matmul(x, self.params[f"l{l}.w"])  # (n, h*dh)
        xw3 = ad.reshape(xw, (n, h, dh))
        s_src = ad.sum_pool(
            ad.mul(xw3, ad.reshape(self.params[f"l{l}.asrc"], (1, h, dh))), axis=2
        )  # (n, h)
        s_dst = ad.sum_pool(
            ad.mul(xw3, ad.reshape(self.params[f"l{l}.adst"], (1, h, dh))), axis=2
        )
        e_src = ad.embedding_lookup(s_src, src)
        e_dst = ad.embedding_lookup(s_dst, dst)
        scores = ad.leaky_relu(ad.add(e_src, e_dst), slope=0.2)  # (e, h)
        # Per-destination softmax. Subtracting the detached segment max is
        # exact: softmax is shift invariant, so that term carries no gradient.
        seg_max = np.full((n, h), -np.inf)
        np.maximum.at(seg_max, dst, scores.data)
        shifted = ad.sub(scores, ad.constant(seg_max[dst], dtype=np.float64))
        expd = ad.exp(shifted)  # (e, h)
        denom = ad.scatter_add(expd, dst, n)  # (n, h)
        alpha = ad.div(expd, ad.embedding_lookup(denom, dst))
        msgs = ad.mul(
            ad.reshape(ad.embedding_lookup(xw, src), (len(src), h, dh)),
            ad.reshape(alpha, (len(src), h, 1)),
        )
        out = ad.scatter_add(ad.reshape(msgs, (len(src), h * dh)), dst, n)
        return ad.add(out, self.params[f"l{l}.b"])

    def _gin_layer(self, l: int, x: ad.Tensor, batch: _Batch) -> ad.Tensor:
        n = len(batch.node_ids)
        one_plus_eps = ad.add(
            self.params[f"l{l}.eps"], ad.constant(np.ones(1), dtype=np.float64)
        )
        z = ad.mul(x, one_plus_eps)
        if len(batch.src):
            z = ad.add(z, ad.scatter_add(ad.embedding_lookup(x, batch.src), batch.dst, n))
        hidden = ad.relu(
            ad.add(ad.matmul(z, self.params[f"l{l}.w1"]), self.params[f"l{l}.b1"])
        )
        return ad.add(ad.matmul(hidden, self.params[f"l{l}.w2"]), self.params[f"l{l}.b2"])

    # -- full pass ---------------------------------------------------------

    def forward(
        self,
        batch: _Batch,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[ad.Tensor, ad.Tensor]:
        """Returns (embeddings (G, 128), logits (G, n_classes))."""
        if training and rng is None:
            raise InvalidInput("training-mode forward requires an rng for dropout")
        coefs = _gcn_coefficients(batch) if self.kind == "gcn" else None
        x = ad.embedding_lookup(self.params["node_emb"], batch.node_ids)
        for l in range(self.n_layers):
            if self.kind == "gcn":
                x = self._gcn_layer(l, x, batch, coefs)
            elif self.kind == "gat":
                x = self._gat_layer(l, x, batch)
            else:
                x = self._gin_layer(l, x, batch)
            x = ad.relu(x)
            if training:
                x = ad.dropout(x, self.dropout, rng, training=True)
        counts = np.bincount(batch.graph_id, minlength=batch.n_graphs).astype(np.float64)
        pooled = ad.div(
            ad.scatter_add(x, batch.graph_id, batch.n_graphs),
            ad.constant(counts[:, None], dtype=np.float64),
        )
        emb = ad.relu(
            ad.add(ad.matmul(pooled, self.params["head.w1"]), self.params["head.b1"])
        )
        logits = ad.add(
            ad.matmul(emb, self.params["head.w2"]), self.params["head.b2"]
        )
        return emb, logits

    def predict(self, structs: Sequence[Struct], batch_size: int = 64) -> np.ndarray:
        """Most likely class label per structure, eval mode."""
        if self.classes_ is None:
            raise InvalidState("model has no stored classes; train it first")
        out = []
        for start in range(0, len(structs), batch_size):
            chunk = structs[start : start + batch_size]
            batch = _combine([_extract(s, self.label_index) for s in chunk])
            _, logits = self.forward(batch, training=False)
            out.append(np.argmax(logits.data, axis=1))
        return self.classes_[np.concatenate(out)] if out else np.array([], dtype=np.int64)

    # -- persistence --------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            if k not in state:
                raise InvalidState(f"checkpoint missing parameter {k!r}")
            if state[k].shape != t.data.shape:
                raise InvalidState(
                    f"parameter {k!r} shape {state[k].shape} != {t.data.shape}"
                )
            t.data = state[k].astype(t.data.dtype)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        ad.save_checkpoint(path, self.state_dict())
        meta = {
            "kind": self.kind,
            "n_classes": self.n_classes,
            "label_index": self.label_index,
            "dim": self.dim,
            "n_layers": self.n_layers,
            "dropout": self.dropout,
            "heads": self.heads,
            "classes": None if self.classes_ is None else self.classes_.tolist(),
        }
        path.with_suffix(path.suffix + ".meta.json").write_text(
            json.dumps(meta, sort_keys=True)
        )

    @classmethod
    def load(cls, path: str | Path) -> "GnnModel":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".meta.json").read_text())
        model = cls(
            kind=meta["kind"],
            n_classes=meta["n_classes"],
            label_index=meta["label_index"],
            dim=meta["dim"],
            n_layers=meta["n_layers"],
            dropout=meta["dropout"],
            heads=meta["heads"],
        )
        model.load_state_dict(ad.load_checkpoint(path))
        if meta["classes"] is not None:
            model.classes_ = np.array(meta["classes"], dtype=np.int64)
        return model


def train_gnn(
    structs: Sequence[Struct],
    labels: Sequence[int],
    kind: str,
    epochs: int = 200,
    batch_size: int = 64,
    lr: float = 0.001,
    dropout: float = 0.5,
    dim: int = 128,
    heads: int = 4,
    n_layers: int = 3,
    seed: int = 0,
) -> GnnModel:
    """Supervised training with Adam and cross-entropy on the given labels."""
    _check_nonempty(structs)
    y = np.asarray(labels, dtype=np.int64)
    if len(y) != len(structs):
        raise InvalidInput(f"{len(structs)} structures but {len(y)} labels")
    classes = np.unique(y)
    if len(classes) < 2:
        raise InvalidInput("labels cover fewer than 2 classes")
    class_pos = {int(c): i for i, c in enumerate(classes)}
    targets = np.array([class_pos[int(v)] for v in y], dtype=np.int64)

    node_labels = sorted(
        {lab for s in structs for lab in _extract_labels(s)}
    )
    label_index = {lab: i + 1 for i, lab in enumerate(node_labels)}

    model = GnnModel(
        kind,
        n_classes=len(classes),
        label_index=label_index,
        dim=dim,
        n_layers=n_layers,
        dropout=dropout,
        heads=heads,
        seed=seed,
    )
    model.classes_ = classes
    cached = [_extract(s, label_index) for s in structs]

    opt = ad.Adam(list(model.params.values()), lr=lr)
    rng = np.random.default_rng(seed)
    model.history["ce_loss"] = []
    report_every = max(1, epochs // 10)
    for epoch in range(epochs):
        order = rng.permutation(len(structs))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            batch = _combine([cached[i] for i in idx])
            _, logits = model.forward(batch, training=True, rng=rng)
            loss = ad.cross_entropy(logits, targets[idx])
            epoch_loss += float(loss.data)
            n_batches += 1
            ad.backward(loss)
            opt.step()
        mean_loss = epoch_loss / max(1, n_batches)
        model.history["ce_loss"].append(mean_loss)
        if (epoch + 1) % report_every == 0 or epoch == 0:
            log.info("gnn-%s epoch %d/%d loss %.6f", kind, epoch + 1, epochs, mean_loss)
    return model


def _extract_labels(struct: Struct) -> list[str]:
    if isinstance(struct, CallGraph):
        return list(struct.nodes)
    if isinstance(struct, CallTree):
        return [n.label for n in struct.root.iter_nodes()]
    raise InvalidInput(f"unsupported structure type {type(struct).__name__}")


def embed_structs(
    model: GnnModel, structs: Sequence[Struct], batch_size: int = 64
) -> list[Embedding]:
    """Penultimate 128-dim head activations, eval mode."""
    out: list[Embedding] = []
    for start in range(0, len(structs), batch_size):
        chunk = structs[start : start + batch_size]
        batch = _combine([_extract(s, model.label_index) for s in chunk])
        emb, _ = model.forward(batch, training=False)
        for j, s in enumerate(chunk):
            out.append(
                Embedding(
                    vector=emb.data[j].copy(),
                    sample_id=_struct_id(s, start + j),
                    method=f"gnn-{model.kind}",
                )
            )
    return out
