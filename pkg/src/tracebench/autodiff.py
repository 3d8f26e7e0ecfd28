"""Dense tensors with reverse-mode automatic differentiation.

Just enough machinery to train the word-embedding, transformer, and
graph-network encoders at desk scale: numpy storage, per-op backward
closures, a topological backward pass, and the optimizers those trainers
need. Float32 is the training default; pass float64 arrays for gradient
checking.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInput, InvalidState, ShapeError

DEFAULT_DTYPE = np.float32


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(data, dtype=DEFAULT_DTYPE) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from exc


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "div")

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result(a.data / b.data, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.accumulate(g * s)

    return _result(a.data * s, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be >= 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a.accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b.accumulate(_unbroadcast(gb, b.shape))

    return _result(np.matmul(a.data, b.data), (a, b), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * mask)

    return _result(np.where(mask, a.data, 0.0), (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.data > 0

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * np.where(mask, 1.0, slope))

    return _result(np.where(mask, a.data, a.data * slope), (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    out_data = _sigmoid(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * out_data * (1.0 - out_data))

    return _result(out_data, (a,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * out_data)

    return _result(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.accumulate(g / a.data)

    return _result(np.log(a.data), (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * 0.5 / out_data)

    return _result(out_data, (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    out_data = ex / ex.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            inner = (g * out_data).sum(axis=axis, keepdims=True)
            a.accumulate((g - inner) * out_data)

    return _result(out_data, (a,), backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - logsum

    def backward(g):
        if a.requires_grad:
            soft = np.exp(out_data)
            a.accumulate(g - soft * g.sum(axis=axis, keepdims=True))

    return _result(out_data, (a,), backward)


def dropout(a: Tensor, p: float, rng: np.random.Generator, training: bool = True) -> Tensor:
    """Inverted-scaling dropout; exact identity when not training or p == 0."""
    if not training or p <= 0.0:
        return a
    if p >= 1.0:
        raise InvalidInput(f"dropout rate must be < 1, got {p}")
    mask = (rng.random(a.shape) >= p).astype(a.data.dtype) / (1.0 - p)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * mask)

    return _result(a.data * mask, (a,), backward)


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply learned scale and shift."""
    if gamma.shape != (a.shape[-1],) or beta.shape != (a.shape[-1],):
        raise ShapeError(
            f"layer_norm: gamma/beta {gamma.shape}/{beta.shape} do not match feature dim {a.shape[-1:]}"
        )
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv

    def backward(g):
        reduce_axes = tuple(range(a.ndim - 1))
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=reduce_axes))
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=reduce_axes))
        if a.requires_grad:
            dxhat = g * gamma.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            a.accumulate((dxhat - m1 - xhat * m2) * inv)

    return _result(xhat * gamma.data + beta.data, (a, gamma, beta), backward)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` by integer index array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
            table.accumulate(gt)

    return _result(table.data[ids], (table,), backward)


gather_rows = embedding_lookup


def scatter_add(a: Tensor, index: np.ndarray, n_rows: int) -> Tensor:
    """Sum rows of ``a`` into ``n_rows`` buckets selected by ``index``."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape[0] != a.shape[0]:
        raise ShapeError(f"scatter_add: index {index.shape} does not match rows {a.shape}")
    out_data = np.zeros((n_rows,) + a.shape[1:], dtype=a.data.dtype)
    np.add.at(out_data, index, a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g[index])

    return _result(out_data, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, splits, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t.accumulate(piece)

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.accumulate(g.reshape(a.shape))

    return _result(a.data.reshape(shape), (a,), backward)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))

    def backward(g):
        if a.requires_grad:
            a.accumulate(np.transpose(g, inverse))

    return _result(np.transpose(a.data, axes), (a,), backward)


def sum_pool(a: Tensor, axis: int | None = None) -> Tensor:
    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a.accumulate(np.full_like(a.data, g))
        else:
            a.accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())

    return _result(a.data.sum(axis=axis), (a,), backward)


def mean_pool(a: Tensor, axis: int | None = None) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a.accumulate(np.full_like(a.data, g / count))
        else:
            a.accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape) / count)

    return _result(a.data.mean(axis=axis), (a,), backward)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer targets under row softmax."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(
            f"cross_entropy: logits {logits.shape} vs targets {targets.shape}"
        )
    n = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    loss = -logp[np.arange(n), targets].mean()

    def backward(g):
        if logits.requires_grad:
            grad = np.exp(logp)
            grad[np.arange(n), targets] -= 1.0
            logits.accumulate(grad * (g / n))

    return _result(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward)


def negative_sampling_loss(pred: Tensor, pos: Tensor, neg: Tensor) -> Tensor:
    """Mean of -log s(pred.pos) - sum_k log s(-pred.neg_k) over the batch.

    ``pred``/``pos`` are (B, d); ``neg`` is (B, K, d).
    """
    if pred.shape != pos.shape or neg.shape[::2] != pred.shape or neg.ndim != 3:
        raise ShapeError(
            f"negative_sampling_loss: pred {pred.shape}, pos {pos.shape}, neg {neg.shape}"
        )
    B = pred.shape[0]
    s_pos = np.einsum("bd,bd->b", pred.data, pos.data)
    s_neg = np.einsum("bd,bkd->bk", pred.data, neg.data)
    # -log sigmoid(x) == softplus(-x), computed stably
    loss = (np.logaddexp(0.0, -s_pos).sum() + np.logaddexp(0.0, s_neg).sum()) / B

    def backward(g):
        c_pos = (_sigmoid(s_pos) - 1.0) * (g / B)  # d loss / d s_pos
        c_neg = _sigmoid(s_neg) * (g / B)  # d loss / d s_neg
        if pred.requires_grad:
            gp = c_pos[:, None] * pos.data + np.einsum("bk,bkd->bd", c_neg, neg.data)
            pred.accumulate(gp)
        if pos.requires_grad:
            pos.accumulate(c_pos[:, None] * pred.data)
        if neg.requires_grad:
            neg.accumulate(c_neg[:, :, None] * pred.data[:, None, :])

    return _result(np.asarray(loss, dtype=pred.data.dtype), (pred, pos, neg), backward)


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad leaf reachable from ``loss``.

    The graph is freed afterward; intermediate grads are dropped.
    """
    if loss.data.size != 1:
        raise InvalidInput(f"backward requires a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        if node._parents:  # free intermediates, keep leaf grads
            node.grad = None
            node._backward = None
            node._parents = ()


class Optimizer:
    def __init__(self, params: Iterable[Tensor], lr: float):
        self.params = list(params)
        self.lr = lr
        self.step_count = 0

    def _grads(self) -> list[np.ndarray]:
        grads = []
        for p in self.params:
            if p.grad is None:
                raise InvalidState("optimizer step before gradients were populated")
            grads.append(p.grad)
        return grads

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def step(self) -> None:
        grads = self._grads()
        self.step_count += 1
        for p, g in zip(self.params, grads):
            p.data -= self.lr * g
        self.zero_grad()


class Adagrad(Optimizer):
    def __init__(self, params, lr: float = 0.05, eps: float = 1e-8):
        super().__init__(params, lr)
        self.eps = eps
        self.acc = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        grads = self._grads()
        self.step_count += 1
        for p, g, acc in zip(self.params, grads, self.acc):
            acc += g * g
            p.data -= self.lr * g / (np.sqrt(acc) + self.eps)
        self.zero_grad()


class Adam(Optimizer):
    """Adaptive-moment estimation; set ``decoupled_weight_decay`` for AdamW."""

    def __init__(
        self,
        params,
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
        decoupled_weight_decay: bool = False,
    ):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.decoupled = decoupled_weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        grads = self._grads()
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if self.weight_decay and not self.decoupled:
                g = g + self.weight_decay * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay and self.decoupled:
                update = update + self.weight_decay * p.data
            p.data -= self.lr * update
        self.zero_grad()


def adamw(params, lr: float = 2e-5, weight_decay: float = 0.01, **kw) -> Adam:
    return Adam(params, lr=lr, weight_decay=weight_decay, decoupled_weight_decay=True, **kw)


_MAGIC = b"TBCP"
_VERSION = 1


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray]) -> None:
    """Flat binary checkpoint: magic, version, named shapes, f32 payload."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HI", _VERSION, len(params)))
        names = list(params)
        for name in names:
            arr = np.asarray(params[name])
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        for name in names:
            fh.write(np.ascontiguousarray(params[name], dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(4) != _MAGIC:
            raise InvalidInput(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<HI", fh.read(6))
        if version != _VERSION:
            raise InvalidInput(f"{path}: unsupported checkpoint version {version}")
        metas = []
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            metas.append((name, shape))
        out = {}
        for name, shape in metas:
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(4 * n)
            out[name] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
        return out
