"""Iterative enhancement: relation features from entity pairs, fed back into the entities."""
from __future__ import annotations

from dataclasses import dataclass

from ..core import tensor as T
from ..core.nn import EncoderLayer, MLP, Module, Parameter, cosine_matrix
from ..core.tensor import Tensor
from .encoder import sinusoid_1d


class SpatioTemporalBlock(Module):
    """Spatial attention over [subject, object, CLS, readout] per frame, then temporal
    attention across frames, with the readout stream returned as the relation feature.

    Role embeddings tell the four tokens apart; without them spatial attention is
    permutation-equivariant and (s, o) would give the same feature as (o, s).
    """

    def __init__(self, d: int, heads: int, rng, time_scale: float = 0.1):
        self.readout = Parameter(rng.normal(0, 0.02, d))
        self.roles = Parameter(rng.normal(0, 0.5, (4, d)))
        self.spatial = EncoderLayer(d, heads, rng)
        self.temporal = EncoderLayer(d, heads, rng)
        self.time_scale = time_scale

    def forward(self, subj: Tensor, obj: Tensor, cls: Tensor) -> Tensor:
        """(P, T, d) x2, (T, d) -> R: (P, T, d)."""
        n_p, n_t, d = subj.shape
        if obj.shape != subj.shape or cls.shape != (n_t, d):
            raise ValueError(f"frame mismatch: {subj.shape}, {obj.shape}, {cls.shape}")
        tokens = T.stack([subj, obj, T.broadcast_to(cls.reshape(1, n_t, d), (n_p, n_t, d)),
                          T.broadcast_to(self.readout.reshape(1, 1, d), (n_p, n_t, d))], axis=2)
        tokens = tokens + self.roles
        mixed = self.spatial(tokens.reshape(n_p * n_t, 4, d)).reshape(n_p, n_t, 4, d)
        # Temporal attention does not mix streams, so only the readout stream's pass is needed.
        readout = mixed[:, :, 3] + sinusoid_1d(n_t, d) * self.time_scale
        return self.temporal(readout)


@dataclass
class EnhancedFeatures:
    subj: Tensor      # (P, T, d)
    obj: Tensor
    relation: Tensor  # (P, T, d), last layer's readout
    history: list     # per-layer relation features


def enhance_step(subj: Tensor, obj: Tensor, cls: Tensor, block: SpatioTemporalBlock, mapping: MLP,
                 alpha: float) -> tuple[Tensor, Tensor, Tensor]:
    """One layer: R = ST(subj, obj, cls); entity <- alpha * entity + (1 - alpha) * M_f(R)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    rel = block(subj, obj, cls)
    if alpha == 1.0:
        return rel, subj, obj
    fed = mapping(rel) * (1.0 - alpha)
    if alpha == 0.0:
        return rel, fed, fed
    return rel, subj * alpha + fed, obj * alpha + fed


class IterativeEnhancer(Module):
    def __init__(self, d: int, heads: int, n_iters: int, alpha: float, rng):
        if n_iters < 0:
            raise ValueError("iteration count must be >= 0")
        self.n_iters = n_iters
        self.alpha = alpha
        self.blocks = [SpatioTemporalBlock(d, heads, rng) for _ in range(max(n_iters, 1))]
        self.mappings = [MLP(d, d, d, rng) for _ in range(n_iters)]

    def forward(self, subj: Tensor, obj: Tensor, cls: Tensor) -> EnhancedFeatures:
        if self.n_iters == 0:
            rel = self.blocks[0](subj, obj, cls)
            return EnhancedFeatures(subj, obj, rel, [rel])
        history = []
        for block, mapping in zip(self.blocks, self.mappings):
            rel, subj, obj = enhance_step(subj, obj, cls, block, mapping, self.alpha)
            history.append(rel)
        return EnhancedFeatures(subj, obj, history[-1], history)


def relation_logits(relation: Tensor, text: Tensor, scale: Tensor) -> Tensor:
    """gamma * cos(mean-over-frames relation feature, relation text rows): (P, C_r)."""
    return cosine_matrix(relation.mean(axis=1), text) * scale


def classify_relations(relation: Tensor, text: Tensor, scale: Tensor) -> Tensor:
    """Independent per-class sigmoid scores (multi-label)."""
    return T.sigmoid(relation_logits(relation, text, scale))

