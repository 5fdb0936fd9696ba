"""Visual encoder with context tokens, query refinement, and prompt-based text features."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..core import tensor as T
from ..core.nn import EncoderLayer, Linear, MLP, Module, MultiHeadAttention, Parameter
from ..core.rng import stream
from ..core.tensor import Tensor


def patchify(frames: np.ndarray, patch: int) -> np.ndarray:
    """(T, H, W, C) -> (T, N_p, patch*patch*C); patches row-major, pixels row-major inside."""
    t, h, w, c = frames.shape
    if h % patch or w % patch:
        raise ValueError(f"frame size {h}x{w} not divisible by patch size {patch}")
    gh, gw = h // patch, w // patch
    x = frames.reshape(t, gh, patch, gw, patch, c).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(t, gh * gw, patch * patch * c)


def sinusoid_1d(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    freq = 1.0 / (10000 ** (np.arange(0, d, 2) / d))
    out = np.zeros((n, d))
    out[:, 0::2] = np.sin(pos * freq)
    out[:, 1::2] = np.cos(pos * freq)
    return out


def sinusoid_2d(gh: int, gw: int, d: int) -> np.ndarray:
    """Half the channels encode the row, half the column."""
    row = sinusoid_1d(gh, d // 2)
    col = sinusoid_1d(gw, d // 2)
    return np.concatenate([np.repeat(row, gw, axis=0), np.tile(col, (gh, 1))], axis=1)


@dataclass
class EncoderOutput:
    h_cls: Tensor       # (T, d)
    h_patch: Tensor     # (T, N_p, d)
    c_obj: Tensor | None  # (T, N_c, d)
    c_rel: Tensor | None
    hidden: Tensor      # final (T, 1 + N_p + 2 N_c, d) sequence


class VisualEncoder(Module):
    def __init__(self, d: int, heads: int, layers: int, patch: int, image_size: int, n_ctx: int, rng):
        self.patch = patch
        self.grid = image_size // patch
        self.n_ctx = n_ctx
        self.proj = Linear(patch * patch * 3, d, rng)
        self.cls = Parameter(rng.normal(0, 0.02, d))
        self.ctx_obj = Parameter(rng.normal(0, 0.02, (n_ctx, d)))
        self.ctx_rel = Parameter(rng.normal(0, 0.02, (n_ctx, d)))
        self.layers = [EncoderLayer(d, heads, rng) for _ in range(layers)]
        self._pos = sinusoid_2d(self.grid, self.grid, d)

    def patch_tokens(self, frames: np.ndarray) -> Tensor:
        patches = patchify(frames, self.patch)
        return self.proj(patches) + self._pos

    def forward(self, frames: np.ndarray, use_context: bool = True) -> EncoderOutput:
        h_patch = self.patch_tokens(frames)
        n_t, n_p, d = h_patch.shape
        parts = [T.broadcast_to(self.cls.reshape(1, 1, d), (n_t, 1, d)), h_patch]
        if use_context:
            parts.append(T.broadcast_to(self.ctx_obj.reshape(1, self.n_ctx, d), (n_t, self.n_ctx, d)))
            parts.append(T.broadcast_to(self.ctx_rel.reshape(1, self.n_ctx, d), (n_t, self.n_ctx, d)))
        x = T.concat(parts, axis=1)
        for layer in self.layers:
            x = layer(x)
        return split_encoder_sequence(x, n_p, self.n_ctx if use_context else 0)


def split_encoder_sequence(x: Tensor, n_p: int, n_ctx: int) -> EncoderOutput:
    """Inverse of the [CLS; patches; c_o; c_r] concatenation."""
    expected = 1 + n_p + 2 * n_ctx
    if x.shape[1] != expected:
        raise ValueError(f"sequence length {x.shape[1]} != 1 + {n_p} + 2*{n_ctx}")
    h_cls = x[:, 0]
    h_patch = x[:, 1:1 + n_p]
    if n_ctx == 0:
        return EncoderOutput(h_cls, h_patch, None, None, x)
    c_obj = x[:, 1 + n_p:1 + n_p + n_ctx]
    c_rel = x[:, 1 + n_p + n_ctx:]
    return EncoderOutput(h_cls, h_patch, c_obj, c_rel, x)


class QueryRefiner(Module):
    """Per-frame residual cross-attention of the shared queries over object context."""

    def __init__(self, d: int, heads: int, rng):
        self.attn = MultiHeadAttention(d, heads, rng)

    def forward(self, queries: Tensor, c_obj: Tensor) -> Tensor:
        n_t = c_obj.shape[0]
        q = T.broadcast_to(queries.reshape(1, *queries.shape), (n_t, *queries.shape))
        return self.attn(q, c_obj, c_obj) + q


def _word_vector(word: str, d: int) -> np.ndarray:
    return stream(0, "word", word).normal(0, 1.0, d)


def name_embedding(name: str, d: int) -> np.ndarray:
    """Deterministic stand-in for a tokenizer embedding: mean of per-word vectors."""
    words = [w for w in re.split(r"[\s\-_]+", name) if w]
    return np.mean([_word_vector(w, d) for w in words], axis=0)


class PromptBank(Module):
    def __init__(self, d: int, n_prompt: int, n_ctx: int, object_names, relation_names, rng,
                 trainable_names: bool = False):
        self.n_ctx = n_ctx
        self.prompt_obj = Parameter(rng.normal(0, 0.02, (n_prompt, d)))
        self.prompt_rel = Parameter(rng.normal(0, 0.02, (n_prompt, d)))
        self.obj_names = Parameter(np.stack([name_embedding(n, d) for n in object_names]), trainable_names)
        self.rel_names = Parameter(np.stack([name_embedding(n, d) for n in relation_names]), trainable_names)
        self.map_obj = MLP(d, d, n_ctx * d, rng)
        self.map_rel = MLP(d, d, n_ctx * d, rng)


class TextEncoder(Module):
    """Transformer over prompt sequences; the final token's output is the class feature."""

    def __init__(self, d: int, heads: int, layers: int, rng):
        self.layers = [EncoderLayer(d, heads, rng) for _ in range(layers)]

    def forward(self, seq: Tensor) -> Tensor:
        for layer in self.layers:
            seq = layer(seq)
        return T.l2_normalize(seq[:, -1], -1)


def _prompt_features(prompt: Tensor, names: Tensor, mapping: MLP, context: Tensor | None,
                     n_ctx: int, text: TextEncoder) -> Tensor:
    n_cat, d = names.shape
    parts = [T.broadcast_to(prompt.reshape(1, *prompt.shape), (n_cat, *prompt.shape))]
    if context is not None:
        pooled = context.mean(axis=(0, 1))
        mapped = mapping(pooled).reshape(1, n_ctx, d)
        parts.append(T.broadcast_to(mapped, (n_cat, n_ctx, d)))
    else:
        parts.append(Tensor(np.zeros((n_cat, n_ctx, d))))
    parts.append(names.reshape(n_cat, 1, d))
    return text(T.concat(parts, axis=1))


def _rows(names: Tensor, ids) -> Tensor:
    return names if ids is None else names[np.asarray(ids, dtype=np.int64)]


def encode_object_prompts(c_obj: Tensor | None, bank: PromptBank, text: TextEncoder, ids=None) -> Tensor:
    """Rows of T_o: [prompt; M_o(pooled C_o); OBJ_c] through the text encoder.

    ``c_obj=None`` replaces the mapped context with zeros (no contextual refinement).
    ``ids`` restricts the output to those category rows; each row is encoded
    independently, so omitted categories never enter the computation.
    """
    return _prompt_features(bank.prompt_obj, _rows(bank.obj_names, ids), bank.map_obj, c_obj, bank.n_ctx, text)


def encode_relation_prompts(c_rel: Tensor | None, bank: PromptBank, text: TextEncoder, ids=None) -> Tensor:
    return _prompt_features(bank.prompt_rel, _rows(bank.rel_names, ids), bank.map_rel, c_rel, bank.n_ctx, text)
