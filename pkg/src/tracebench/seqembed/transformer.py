"""Desk-scale transformer encoder: MLM pretraining and SimCSE contrastive tuning."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import autodiff as ad
from ..abstraction import TokenSequence
from ..core import CLS_ID, MASK_ID, PAD_ID, UNK_ID, Vocabulary
from ..errors import InvalidConfig, InvalidInput

log = logging.getLogger(__name__)

_RESERVED_ROWS = 4


@dataclass(frozen=True)
class TransformerConfig:
    """Encoder shape; desk defaults here, full scale via ``paper_scale``."""

    n_layers: int = 2
    n_heads: int = 4
    hidden: int = 64
    ff: int = 256
    max_len: int = 256
    dropout: float = 0.1
    out_dim: int = 128

    def __post_init__(self):
        if min(self.n_layers, self.n_heads, self.hidden, self.ff, self.max_len, self.out_dim) < 1:
            raise InvalidConfig(f"non-positive transformer dimension in {self}")
        if self.hidden % self.n_heads != 0:
            raise InvalidConfig(
                f"hidden size {self.hidden} not divisible by {self.n_heads} heads"
            )
        if not (0.0 <= self.dropout < 1.0):
            raise InvalidConfig(f"dropout must be in [0, 1), got {self.dropout}")


def paper_scale() -> TransformerConfig:
    return TransformerConfig(n_layers=12, n_heads=12, hidden=768, ff=3072)


class TransformerEncoder:
    """Post-LN transformer with tied MLM head and a projection to ``out_dim``."""

    def __init__(self, vocab_size: int, cfg: TransformerConfig | None = None, seed: int = 0):
        self.cfg = cfg or TransformerConfig()
        self.vocab_size = vocab_size
        self.seed = seed
        self.history: dict[str, list[float]] = {}
        rng = np.random.default_rng(seed)
        h, f, V = self.cfg.hidden, self.cfg.ff, vocab_size
        init = lambda *shape: ad.parameter(rng.normal(0.0, 0.02, size=shape), dtype=np.float64)
        self.params: dict[str, ad.Tensor] = {
            "tok_emb": init(V, h),
            "pos_emb": init(self.cfg.max_len + 1, h),
            "emb_ln.g": ad.parameter(np.ones(h), dtype=np.float64),
            "emb_ln.b": ad.parameter(np.zeros(h), dtype=np.float64),
            "proj.w": init(h, self.cfg.out_dim),
            "proj.b": ad.parameter(np.zeros(self.cfg.out_dim), dtype=np.float64),
            "mlm.bias": ad.parameter(np.zeros(V), dtype=np.float64),
        }
        for l in range(self.cfg.n_layers):
            p = self.params
            for name in ("wq", "wk", "wv", "wo"):
                p[f"l{l}.{name}"] = init(h, h)
                p[f"l{l}.{name[1]}b"] = ad.parameter(np.zeros(h), dtype=np.float64)
            p[f"l{l}.ln1.g"] = ad.parameter(np.ones(h), dtype=np.float64)
            p[f"l{l}.ln1.b"] = ad.parameter(np.zeros(h), dtype=np.float64)
            p[f"l{l}.ff.w1"] = init(h, f)
            p[f"l{l}.ff.b1"] = ad.parameter(np.zeros(f), dtype=np.float64)
            p[f"l{l}.ff.w2"] = init(f, h)
            p[f"l{l}.ff.b2"] = ad.parameter(np.zeros(h), dtype=np.float64)
            p[f"l{l}.ln2.g"] = ad.parameter(np.ones(h), dtype=np.float64)
            p[f"l{l}.ln2.b"] = ad.parameter(np.zeros(h), dtype=np.float64)

    def parameters(self) -> list[ad.Tensor]:
        return list(self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, v in state.items():
            if k not in self.params:
                raise InvalidInput(f"unknown parameter {k!r} in checkpoint")
            if tuple(self.params[k].data.shape) != tuple(v.shape):
                raise InvalidInput(f"shape mismatch for {k}: {self.params[k].data.shape} vs {v.shape}")
            self.params[k].data = np.asarray(v, dtype=self.params[k].data.dtype)

    def save(self, path: str | Path) -> None:
        ad.save_checkpoint(path, self.state_dict())

    def load(self, path: str | Path) -> None:
        self.load_state_dict(ad.load_checkpoint(path))

    def prepare_batch(self, id_seqs: Sequence[Sequence[int]]) -> np.ndarray:
        """Truncate to max_len, prepend [CLS], pad to the batch maximum."""
        clipped = [list(s)[: self.cfg.max_len] for s in id_seqs]
        T = max(len(s) for s in clipped) + 1
        ids = np.full((len(clipped), T), PAD_ID, dtype=np.int64)
        ids[:, 0] = CLS_ID
        for r, s in enumerate(clipped):
            ids[r, 1 : 1 + len(s)] = s
        return ids

    def forward(
        self,
        ids: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[list[ad.Tensor], np.ndarray]:
        """Run the stack; returns per-layer hidden states and the pad mask.

        ``layers[0]`` is the embedding output; ``layers[-1]`` the final layer.
        Eval mode (training=False) is dropout-free and deterministic.
        """
        if training and rng is None:
            raise InvalidInput("training forward needs an rng for dropout")
        p = self.cfg.dropout
        cfg = self.cfg
        B, T = ids.shape
        if T > cfg.max_len + 1:
            raise InvalidInput(f"sequence length {T} exceeds max positions {cfg.max_len + 1}")
        pad_mask = (ids != PAD_ID).astype(np.float64)
        pos_ids = np.arange(T, dtype=np.int64)
        x = ad.add(
            ad.embedding_lookup(self.params["tok_emb"], ids),
            ad.embedding_lookup(self.params["pos_emb"], pos_ids),
        )
        x = ad.layer_norm(x, self.params["emb_ln.g"], self.params["emb_ln.b"])
        if training:
            x = ad.dropout(x, p, rng, training=True)
        layers = [x]
        H, dh = cfg.n_heads, cfg.hidden // cfg.n_heads
        attn_bias = ad.constant(
            ((1.0 - pad_mask) * -1e9).reshape(B, 1, 1, T), dtype=np.float64
        )
        inv_sqrt = 1.0 / np.sqrt(dh)
        for l in range(cfg.n_layers):
            pr = self.params

            def heads(t: ad.Tensor) -> ad.Tensor:
                return ad.transpose(ad.reshape(t, (B, T, H, dh)), (0, 2, 1, 3))

            q = heads(ad.add(ad.matmul(x, pr[f"l{l}.wq"]), pr[f"l{l}.qb"]))
            k = heads(ad.add(ad.matmul(x, pr[f"l{l}.wk"]), pr[f"l{l}.kb"]))
            v = heads(ad.add(ad.matmul(x, pr[f"l{l}.wv"]), pr[f"l{l}.vb"]))
            scores = ad.add(ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), inv_sqrt), attn_bias)
            attn = ad.softmax(scores, axis=-1)
            if training:
                attn = ad.dropout(attn, p, rng, training=True)
            ctx = ad.reshape(ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3)), (B, T, cfg.hidden))
            ctx = ad.add(ad.matmul(ctx, pr[f"l{l}.wo"]), pr[f"l{l}.ob"])
            if training:
                ctx = ad.dropout(ctx, p, rng, training=True)
            x = ad.layer_norm(ad.add(x, ctx), pr[f"l{l}.ln1.g"], pr[f"l{l}.ln1.b"])
            ff = ad.relu(ad.add(ad.matmul(x, pr[f"l{l}.ff.w1"]), pr[f"l{l}.ff.b1"]))
            ff = ad.add(ad.matmul(ff, pr[f"l{l}.ff.w2"]), pr[f"l{l}.ff.b2"])
            if training:
                ff = ad.dropout(ff, p, rng, training=True)
            x = ad.layer_norm(ad.add(x, ff), pr[f"l{l}.ln2.g"], pr[f"l{l}.ln2.b"])
            layers.append(x)
        return layers, pad_mask

    def project(self, pooled: ad.Tensor) -> ad.Tensor:
        return ad.add(ad.matmul(pooled, self.params["proj.w"]), self.params["proj.b"])

    def cls_representation(
        self,
        ids: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> ad.Tensor:
        layers, _ = self.forward(ids, training=training, rng=rng)
        final = layers[-1]
        B, T, h = final.shape
        flat = ad.reshape(final, (B * T, h))
        cls_rows = ad.embedding_lookup(flat, np.arange(B, dtype=np.int64) * T)
        return self.project(cls_rows)

    def mlm_logits(self, hidden_rows: ad.Tensor) -> ad.Tensor:
        """Tied-output logits for a (N, hidden) batch of selected positions."""
        return ad.add(
            ad.matmul(hidden_rows, ad.transpose(self.params["tok_emb"], (1, 0))),
            self.params["mlm.bias"],
        )


def apply_mlm_masking(
    ids: np.ndarray,
    rng: np.random.Generator,
    n_vocab: int,
    rate: float = 0.15,
) -> tuple[np.ndarray, np.ndarray]:
    """BERT-style corruption: select ``rate`` of content tokens; of those
    80% become [MASK], 10% a random real token, 10% stay unchanged.

    Returns (corrupted ids, selected boolean mask). [CLS]/[PAD] are never
    selected.
    """
    selectable = (ids != PAD_ID) & (ids != CLS_ID)
    selected = selectable & (rng.random(ids.shape) < rate)
    corrupted = ids.copy()
    roll = rng.random(ids.shape)
    to_mask = selected & (roll < 0.8)
    to_random = selected & (roll >= 0.8) & (roll < 0.9)
    corrupted[to_mask] = MASK_ID
    n_random = int(to_random.sum())
    if n_random:
        if n_vocab > _RESERVED_ROWS:
            corrupted[to_random] = rng.integers(_RESERVED_ROWS, n_vocab, size=n_random)
        else:
            corrupted[to_random] = UNK_ID
    return corrupted, selected


def build_mlm_corpus(
    seqs: list[tuple[int, ...]],
    rng: np.random.Generator,
    max_len: int,
    pair_lines: bool = True,
) -> list[tuple[int, ...]]:
    """Pretraining lines: each line joins two randomly selected sequences."""
    if not pair_lines:
        return [s[:max_len] for s in seqs]
    lines = []
    for _ in range(len(seqs)):
        a = seqs[int(rng.integers(len(seqs)))]
        b = seqs[int(rng.integers(len(seqs)))]
        lines.append((a + b)[:max_len])
    return lines


def pretrain_transformer_mlm(
    sequences: Sequence[TokenSequence],
    vocab: Vocabulary,
    cfg: TransformerConfig | None = None,
    epochs: int = 10,
    batch_size: int = 64,
    lr: float = 2e-5,
    weight_decay: float = 0.01,
    mask_rate: float = 0.15,
    seed: int = 0,
    pair_lines: bool = True,
) -> TransformerEncoder:
    """Masked-token pretraining with the 80/10/10 corruption scheme."""
    if not sequences:
        raise InvalidInput("no sequences supplied")
    cfg = cfg or TransformerConfig()
    rng = np.random.default_rng(seed)
    encoder = TransformerEncoder(len(vocab), cfg, seed=seed)
    raw = [tuple(s.tokens) for s in sequences]
    lines = build_mlm_corpus(raw, rng, cfg.max_len, pair_lines=pair_lines)
    usable = [l for l in lines if len(l) >= 2]
    if len(usable) < len(lines):
        log.warning("mlm: skipped %d lines shorter than 2 tokens", len(lines) - len(usable))
    if not usable:
        raise InvalidInput("mlm: no usable lines (all shorter than 2 tokens)")
    # The projection head is downstream-only; MLM loss never reaches it.
    trained = [t for name, t in encoder.params.items() if not name.startswith("proj.")]
    opt = ad.adamw(trained, lr=lr, weight_decay=weight_decay)
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(len(usable))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(order), batch_size):
            batch = [usable[i] for i in order[start : start + batch_size]]
            ids = encoder.prepare_batch(batch)
            corrupted, selected = apply_mlm_masking(ids, rng, len(vocab), rate=mask_rate)
            if not selected.any():
                continue
            layers, _ = encoder.forward(corrupted, training=True, rng=rng)
            B, T, h = layers[-1].shape
            flat = ad.reshape(layers[-1], (B * T, h))
            sel_idx = np.flatnonzero(selected.reshape(-1))
            logits = encoder.mlm_logits(ad.embedding_lookup(flat, sel_idx))
            targets = ids.reshape(-1)[sel_idx]
            loss = ad.cross_entropy(logits, targets)
            epoch_loss += float(loss.data)
            n_batches += 1
            ad.backward(loss)
            opt.step()
        if n_batches:
            losses.append(epoch_loss / n_batches)
            log.info("mlm epoch %d/%d loss %.6f", epoch + 1, epochs, losses[-1])
    encoder.history["mlm_loss"] = losses
    return encoder


def train_simcse(
    encoder: TransformerEncoder,
    sequences: Sequence[TokenSequence],
    epochs: int = 10,
    batch_size: int = 64,
    lr: float = 2e-5,
    temperature: float = 0.05,
    seed: int = 0,
) -> TransformerEncoder:
    """Contrastive tuning: two dropout views per trace, InfoNCE over the batch."""
    if batch_size < 2:
        raise InvalidConfig("simcse needs batch_size >= 2 for in-batch negatives")
    if not sequences:
        raise InvalidInput("no sequences supplied")
    raw = [tuple(s.tokens) for s in sequences]
    rng = np.random.default_rng(seed)
    # The contrastive path runs through the projection, never the MLM bias.
    trained = [t for name, t in encoder.params.items() if name != "mlm.bias"]
    opt = ad.adamw(trained, lr=lr)
    losses, alignment = [], []

    def normalize(z: ad.Tensor) -> ad.Tensor:
        norm = ad.sqrt(ad.sum_pool(ad.mul(z, z), axis=1))
        return ad.div(z, ad.reshape(norm, (z.shape[0], 1)))

    for epoch in range(epochs):
        order = rng.permutation(len(raw))
        epoch_loss, epoch_align, n_batches = 0.0, 0.0, 0
        for start in range(0, len(order), batch_size):
            batch = [raw[i] for i in order[start : start + batch_size]]
            if len(batch) < 2:
                continue
            ids = encoder.prepare_batch(batch)
            z1 = normalize(encoder.cls_representation(ids, training=True, rng=rng))
            z2 = normalize(encoder.cls_representation(ids, training=True, rng=rng))
            sims = ad.scale(ad.matmul(z1, ad.transpose(z2, (1, 0))), 1.0 / temperature)
            loss = ad.cross_entropy(sims, np.arange(len(batch), dtype=np.int64))
            epoch_loss += float(loss.data)
            epoch_align += float(np.mean(np.diagonal(sims.data)) * temperature)
            n_batches += 1
            ad.backward(loss)
            opt.step()
        if n_batches:
            losses.append(epoch_loss / n_batches)
            alignment.append(epoch_align / n_batches)
            log.info(
                "simcse epoch %d/%d loss %.6f alignment %.4f",
                epoch + 1,
                epochs,
                losses[-1],
                alignment[-1],
            )
    encoder.history["simcse_loss"] = losses
    encoder.history["simcse_alignment"] = alignment
    return encoder
