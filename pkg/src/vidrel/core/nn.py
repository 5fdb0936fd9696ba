"""Neural building blocks on top of the tape: linear layers, norms, attention."""
from __future__ import annotations

import logging
import math

import numpy as np

from . import tensor as T
from .tensor import Tensor

log = logging.getLogger(__name__)
_warned_zero_norm = False


class Parameter(Tensor):
    def __init__(self, data, trainable: bool = True):
        super().__init__(data, requires_grad=trainable)


class Module:
    """Attribute-walking container; parameter order is attribute definition order."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{full}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self):
        return [(n, p) for n, p in self.named_parameters() if p.requires_grad]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def set_trainable(self, flag: bool):
        for p in self.parameters():
            p.requires_grad = flag

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = dict(self.named_parameters())
        missing = [n for n in params if n not in state]
        if missing:
            raise KeyError(f"checkpoint is missing parameters: {missing[:5]}")
        for n, p in params.items():
            arr = np.asarray(state[n])
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {n}: {arr.shape} vs {p.shape}")
            p.data = arr.astype(p.data.dtype)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / math.sqrt(d_in)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(d_in, d_out)))
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def forward(self, x):
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gain = Parameter(np.ones(d))
        self.shift = Parameter(np.zeros(d))
        self.eps = eps

    def forward(self, x):
        return T.layer_norm(x, self.eps) * self.gain + self.shift


class MLP(Module):
    """Linear/GELU stack; ``n_layers`` counts linear maps."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng, n_layers: int = 2):
        dims = [d_in] + [d_hidden] * (n_layers - 1) + [d_out]
        self.layers = [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = T.gelu(x)
        return x


def cosine_similarity(a, b) -> float:
    """Plain cosine of two vectors; a zero-norm input gives 0.0 (logged once)."""
    global _warned_zero_norm
    a = np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64).ravel()
    b = np.asarray(b.data if isinstance(b, Tensor) else b, dtype=np.float64).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        if not _warned_zero_norm:
            log.warning("cosine similarity of a zero-norm vector; returning 0")
            _warned_zero_norm = True
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_matrix(x, y):
    """Pairwise cosine between rows of x (..., n, d) and rows of y (m, d) -> (..., n, m)."""
    return T.matmul(T.l2_normalize(x, -1), T.transpose(T.l2_normalize(y, -1)))


def multi_head_attention(q, k, v, params: dict, n_heads: int, return_weights: bool = False):
    """Scaled dot-product attention over leading batch dims.

    q: (..., Nq, d), k/v: (..., Nk, d). ``params`` holds wq, bq, wk, bk, wv, bv,
    wo, bo. Returns (..., Nq, d) and optionally weights (..., h, Nq, Nk).
    """
    q, k, v = T.as_tensor(q), T.as_tensor(k), T.as_tensor(v)
    if k.shape[:-1] != v.shape[:-1]:
        raise ValueError(f"key/value shape mismatch: {k.shape} vs {v.shape}")
    d = q.shape[-1]
    if d % n_heads:
        raise ValueError(f"model dim {d} not divisible by {n_heads} heads")
    dh = d // n_heads

    def split(x, w, b):
        y = T.matmul(x, w) + b
        lead = y.shape[:-2]
        y = y.reshape(*lead, y.shape[-2], n_heads, dh)
        nd = y.ndim
        return T.transpose(y, tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1))

    qh = split(q, params["wq"], params["bq"])
    kh = split(k, params["wk"], params["bk"])
    vh = split(v, params["wv"], params["bv"])
    scores = T.matmul(qh, T.swapaxes(kh, -1, -2)) * (1.0 / math.sqrt(dh))
    weights = T.softmax(scores, axis=-1)
    mixed = T.matmul(weights, vh)
    nd = mixed.ndim
    mixed = T.transpose(mixed, tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1))
    mixed = mixed.reshape(*mixed.shape[:-2], d)
    out = T.matmul(mixed, params["wo"]) + params["bo"]
    if return_weights:
        return out, weights
    return out


class MultiHeadAttention(Module):
    def __init__(self, d: int, n_heads: int, rng):
        if d % n_heads:
            raise ValueError(f"model dim {d} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.q = Linear(d, d, rng)
        self.k = Linear(d, d, rng)
        self.v = Linear(d, d, rng)
        self.o = Linear(d, d, rng)
        self.last_weights: np.ndarray | None = None

    def params(self):
        return {"wq": self.q.weight, "bq": self.q.bias, "wk": self.k.weight, "bk": self.k.bias,
                "wv": self.v.weight, "bv": self.v.bias, "wo": self.o.weight, "bo": self.o.bias}

    def forward(self, q, k, v):
        out, w = multi_head_attention(q, k, v, self.params(), self.n_heads, return_weights=True)
        self.last_weights = w.data
        return out


class EncoderLayer(Module):
    """Pre-norm self-attention block with a GELU MLP."""

    def __init__(self, d: int, n_heads: int, rng, mlp_ratio: int = 2):
        self.ln1 = LayerNorm(d)
        self.attn = MultiHeadAttention(d, n_heads, rng)
        self.ln2 = LayerNorm(d)
        self.mlp = MLP(d, mlp_ratio * d, d, rng)

    def forward(self, x):
        h = self.ln1(x)
        x = x + self.attn(h, h, h)
        return x + self.mlp(self.ln2(x))


class DecoderLayer(Module):
    """Pre-norm decoder block: query self-attention, cross-attention, MLP."""

    def __init__(self, d: int, n_heads: int, rng, mlp_ratio: int = 2):
        self.ln1 = LayerNorm(d)
        self.self_attn = MultiHeadAttention(d, n_heads, rng)
        self.ln2 = LayerNorm(d)
        self.ln_mem = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(d, n_heads, rng)
        self.ln3 = LayerNorm(d)
        self.mlp = MLP(d, mlp_ratio * d, d, rng)

    def forward(self, x, memory):
        h = self.ln1(x)
        x = x + self.self_attn(h, h, h)
        m = self.ln_mem(memory)
        x = x + self.cross_attn(self.ln2(x), m, m)
        return x + self.mlp(self.ln3(x))
