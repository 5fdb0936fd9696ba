"""The full relation detector: encode -> refine -> decode -> pair -> enhance -> classify."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import tensor as T
from ..core.nn import Module, Parameter
from ..core.rng import stream
from ..core.tensor import Tensor
from . import detector as D
from .encoder import (EncoderOutput, PromptBank, QueryRefiner, TextEncoder, VisualEncoder,
                      encode_object_prompts, encode_relation_prompts)
from .enhance import EnhancedFeatures, IterativeEnhancer, classify_relations, relation_logits


@dataclass
class ModelConfig:
    d: int = 64
    heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    text_layers: int = 2
    patch: int = 8
    image_size: int = 64
    n_ctx: int = 4
    n_prompt: int = 4
    n_queries: int = 12
    n_iters: int = 2
    alpha: float = 0.9
    gamma_init: float = 10.0
    top_k: int = 6
    presence_threshold: float = D.PRESENCE_THRESHOLD
    score_threshold: float = D.SCORE_THRESHOLD
    min_extent: int = 4             # candidates with shorter presence runs are dropped
    context_encoding: bool = True   # context tokens in the visual encoder at all
    refine_queries: bool = True     # queries attend to object context
    refine_text: bool = True        # prompts carry mapped context
    freeze_backbone: bool = False   # visual/text encoders fixed

    def validate(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.n_iters < 0:
            raise ValueError("n_iters must be >= 0")
        for name in ("presence_threshold", "score_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.d % self.heads:
            raise ValueError("d must be divisible by heads")
        if self.image_size % self.patch:
            raise ValueError("image size must be divisible by the patch size")
        if self.min_extent < 1:
            raise ValueError("min_extent must be >= 1")
        if self.top_k < 2:
            raise ValueError("top_k must be >= 2 to form pairs")


@dataclass
class Context:
    """Per-segment shared encodings."""
    enc: EncoderOutput
    queries: Tensor            # (T, N_q, d) refined (or broadcast) queries
    text_obj: Tensor           # rows for ``obj_ids``
    text_rel: Tensor           # rows for ``rel_ids``
    obj_ids: np.ndarray
    rel_ids: np.ndarray


@dataclass
class Decoded:
    features: Tensor   # O: (N_q, T, d)
    boxes: Tensor      # (N_q, T, 4) normalized center form
    presence: Tensor   # (N_q, T) logits


class RelationDetector(Module):
    def __init__(self, cfg: ModelConfig, object_names, relation_names, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        self.object_names = list(object_names)
        self.relation_names = list(relation_names)
        rng = stream(seed, "init")
        d = cfg.d
        self.visual = VisualEncoder(d, cfg.heads, cfg.encoder_layers, cfg.patch, cfg.image_size, cfg.n_ctx, rng)
        self.queries = Parameter(rng.normal(0, 1.0, (cfg.n_queries, d)))
        self.refiner = QueryRefiner(d, cfg.heads, rng)
        self.bank = PromptBank(d, cfg.n_prompt, cfg.n_ctx, self.object_names, self.relation_names, rng)
        self.text = TextEncoder(d, cfg.heads, cfg.text_layers, rng)
        self.decoder = D.ObjectDecoder(d, cfg.heads, cfg.decoder_layers, rng)
        self.box_head = D.BoxHead(d, rng)
        self.enhancer = IterativeEnhancer(d, cfg.heads, cfg.n_iters, cfg.alpha, rng)
        self.gamma_obj = Parameter(np.array(cfg.gamma_init))
        self.gamma_rel = Parameter(np.array(cfg.gamma_init))
        self.gamma_ctx_obj = Parameter(np.array(cfg.gamma_init))
        self.gamma_ctx_rel = Parameter(np.array(cfg.gamma_init))
        if cfg.freeze_backbone:
            for module in (self.visual.proj, *self.visual.layers, self.text):
                module.set_trainable(False)

    # -- stages ---------------------------------------------------------------
    def encode(self, frames: np.ndarray, obj_ids=None, rel_ids=None) -> Context:
        """Visual encoding, query refinement and text features for the requested category rows."""
        cfg = self.cfg
        enc = self.visual(frames, use_context=cfg.context_encoding)
        n_t = enc.h_patch.shape[0]
        if cfg.context_encoding and cfg.refine_queries:
            q = self.refiner(self.queries, enc.c_obj)
        else:
            q = T.broadcast_to(self.queries.reshape(1, *self.queries.shape), (n_t, *self.queries.shape))
        obj_ids = np.arange(len(self.object_names)) if obj_ids is None else np.asarray(obj_ids, dtype=np.int64)
        rel_ids = np.arange(len(self.relation_names)) if rel_ids is None else np.asarray(rel_ids, dtype=np.int64)
        use_text_ctx = cfg.context_encoding and cfg.refine_text
        t_obj = encode_object_prompts(enc.c_obj if use_text_ctx else None, self.bank, self.text, obj_ids)
        t_rel = encode_relation_prompts(enc.c_rel if use_text_ctx else None, self.bank, self.text, rel_ids)
        return Context(enc, q, t_obj, t_rel, obj_ids, rel_ids)

    def decode(self, ctx: Context) -> Decoded:
        feats = self.decoder(ctx.queries, ctx.enc.h_patch)
        boxes, presence = self.box_head(feats)
        return Decoded(feats, boxes, presence)

    def enhance(self, dec_features: Tensor, pairs, h_cls: Tensor) -> EnhancedFeatures:
        subj_idx = np.array([p[0] for p in pairs], dtype=np.int64)
        obj_idx = np.array([p[1] for p in pairs], dtype=np.int64)
        return self.enhancer(dec_features[subj_idx], dec_features[obj_idx], h_cls)

    def object_logits(self, features: Tensor, extents, text: Tensor) -> Tensor:
        """Cosine logits of features pooled over each row's [begin, end) extent."""
        pooled = T.stack([D.extent_pool(features[i], b, e) for i, (b, e) in enumerate(extents)], axis=0)
        return D.class_logits(pooled, text, self.gamma_obj)

    def relation_scores(self, relation: Tensor, text: Tensor) -> Tensor:
        return classify_relations(relation, text, self.gamma_rel)

    def relation_logits(self, relation: Tensor, text: Tensor) -> Tensor:
        return relation_logits(relation, text, self.gamma_rel)


@dataclass
class Candidate:
    query: int
    extent: tuple[int, int]        # segment-relative [begin, end)
    scores: np.ndarray             # per category row (sigmoid)
    boxes: np.ndarray              # (T, 4) normalized center form

    @property
    def best(self) -> float:
        return float(self.scores.max())


@dataclass
class SegmentOutput:
    candidates: list[Candidate]
    pairs: list[tuple[int, int]]
    relation_scores: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    subject_scores: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    object_scores: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    subject_boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 4)))
    object_boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 4)))
    pair_extents: list = field(default_factory=list)
    enhanced: EnhancedFeatures | None = None
    decoded: Decoded | None = None


def select_candidates(model: RelationDetector, ctx: Context, dec: Decoded) -> list[Candidate]:
    """Queries whose presence gives a non-empty extent and whose best score passes the threshold."""
    cfg = model.cfg
    presence = 1.0 / (1.0 + np.exp(-dec.presence.data.astype(np.float64)))
    out = []
    extents = {}
    for q in range(presence.shape[0]):
        ext = D.trajectory_extent(presence[q], cfg.presence_threshold)
        if ext is not None and ext[1] - ext[0] >= cfg.min_extent:
            extents[q] = ext
    if not extents:
        return out
    qs = sorted(extents)
    scores = T.sigmoid(model.object_logits(dec.features[np.array(qs)], [extents[q] for q in qs], ctx.text_obj)).data
    for i, q in enumerate(qs):
        if scores[i].max() >= cfg.score_threshold:
            out.append(Candidate(q, extents[q], scores[i].astype(np.float64), dec.boxes.data[q].astype(np.float64)))
    return out


def run_segment(model: RelationDetector, frames: np.ndarray, obj_ids=None, rel_ids=None) -> SegmentOutput:
    """Inference pass over one segment (call under ``no_grad``)."""
    ctx = model.encode(frames, obj_ids, rel_ids)
    dec = model.decode(ctx)
    cands = select_candidates(model, ctx, dec)
    by_query = {c.query: c for c in cands}
    pairs = D.form_pairs(np.array([c.best for c in cands]), model.cfg.top_k)
    pairs = [(cands[a].query, cands[b].query) for a, b in pairs]
    extents = []
    for qs, qo in pairs:
        (b1, e1), (b2, e2) = by_query[qs].extent, by_query[qo].extent
        extents.append((max(b1, b2), min(e1, e2)))
    keep = [i for i, (b, e) in enumerate(extents) if e > b]
    pairs = [pairs[i] for i in keep]
    extents = [extents[i] for i in keep]
    out = SegmentOutput(cands, pairs, decoded=dec)
    if not pairs:
        return out
    enh = model.enhance(dec.features, pairs, ctx.enc.h_cls)
    out.enhanced = enh
    out.relation_scores = model.relation_scores(enh.relation, ctx.text_rel).data.astype(np.float64)
    out.subject_scores = T.sigmoid(model.object_logits(enh.subj, extents, ctx.text_obj)).data.astype(np.float64)
    out.object_scores = T.sigmoid(model.object_logits(enh.obj, extents, ctx.text_obj)).data.astype(np.float64)
    out.subject_boxes = model.box_head(enh.subj)[0].data.astype(np.float64)
    out.object_boxes = model.box_head(enh.obj)[0].data.astype(np.float64)
    out.pair_extents = extents
    return out
