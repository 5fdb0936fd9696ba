"""Per-segment targets, the segment loss, and the training loop."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import tensor as T
from .core.checkpoint import load_checkpoint, save_checkpoint
from .core.optim import AdamW
from .core.rng import stream
from .core.tensor import NonFiniteError, Tensor, no_grad
from .data.segments import segmentize
from .data.types import SegmentBatch, VideoSample, Vocabulary, corners_to_normalized
from .losses import (LossBreakdown, LossWeights, bce_sum, contextual_losses, cross_entropy,
                     obj_contrastive_loss, rel_contrastive_loss, total_loss, trajectory_loss)
from .model import detector as D
from .model.network import ModelConfig, RelationDetector

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 1e-4
    milestones: tuple[int, ...] = (40,)
    factor: float = 0.1
    epochs: int = 50
    seed: int = 0
    shuffle: bool = True
    w_traj: float = 1.0
    w_ctx: float = 0.2
    w_cst: float = 0.1
    w_det: float = 1.0
    label_min_frames: int = 15      # relation frames inside a segment needed to label the pair
    match_cls: float = 1.0
    match_box: float = 5.0
    det_box: float = 5.0            # L1 weight of the query-level box term
    segment_length: int = 30

    def weights(self) -> LossWeights:
        return LossWeights(traj=self.w_traj, ctx=self.w_ctx, cst=self.w_cst, det=self.w_det)

    def validate(self):
        if list(self.milestones) != sorted(self.milestones):
            raise ValueError("milestones must be ascending")
        if self.epochs < 0 or self.lr <= 0:
            raise ValueError("epochs must be >= 0 and lr > 0")


@dataclass
class SegmentTargets:
    """Ground truth of one segment restricted to base categories, in training columns."""
    tids: list[int]
    classes: np.ndarray          # (n,) base object column per track
    boxes: np.ndarray            # (n, T, 4) normalized center form (zeros outside the extent)
    masks: np.ndarray            # (n, T) bool
    pair_labels: dict            # (tid_s, tid_o) -> set of base relation columns
    presence_obj: np.ndarray     # (T, C_ob)
    presence_rel: np.ndarray     # (T, C_rb)


def base_columns(vocab: Vocabulary) -> tuple[np.ndarray, np.ndarray]:
    return np.array(vocab.base_objects(), dtype=np.int64), np.array(vocab.base_relations(), dtype=np.int64)


def segment_targets(batch: SegmentBatch, vocab: Vocabulary, label_min_frames: int = 15) -> SegmentTargets:
    obj_ids, rel_ids = base_columns(vocab)
    ocol = {int(c): i for i, c in enumerate(obj_ids)}
    rcol = {int(c): i for i, c in enumerate(rel_ids)}
    n_t = batch.length
    objs = [o for o in batch.objects if o.category in ocol]
    boxes = np.zeros((len(objs), n_t, 4))
    masks = np.zeros((len(objs), n_t), dtype=bool)
    pres_o = np.zeros((n_t, len(obj_ids)))
    for i, o in enumerate(objs):
        b, e = o.traj.begin_fid - batch.start, o.traj.end_fid - batch.start
        boxes[i, b:e] = corners_to_normalized(o.traj.boxes, batch.width, batch.height)
        masks[i, b:e] = True
        pres_o[b:e, ocol[o.category]] = 1.0
    pres_r = np.zeros((n_t, len(rel_ids)))
    labels: dict = {}
    for r in batch.relations:
        if r.predicate not in rcol or r.subject not in ocol or r.object not in ocol:
            continue
        pres_r[r.begin_fid - batch.start:r.end_fid - batch.start, rcol[r.predicate]] = 1.0
        if r.end_fid - r.begin_fid >= label_min_frames:
            labels.setdefault((r.subject_tid, r.object_tid), set()).add(rcol[r.predicate])
    return SegmentTargets([o.tid for o in objs], np.array([ocol[o.category] for o in objs], dtype=np.int64),
                          boxes, masks, labels, pres_o, pres_r)


def _extent(mask: np.ndarray) -> tuple[int, int]:
    idx = np.flatnonzero(mask)
    return int(idx[0]), int(idx[-1]) + 1


@dataclass
class SegmentLoss:
    breakdown: LossBreakdown
    matching: dict[int, int]           # GT index -> query
    pairs: list[tuple[int, int]]       # GT index pairs used for relation terms
    n_pairs: int = 0


def match_queries(model: RelationDetector, dec, ctx, tg: SegmentTargets, tcfg: TrainConfig) -> dict[int, int]:
    """GT track -> query assignment from full-segment pooled scores and boxes (no gradient)."""
    if len(tg.tids) == 0:
        return {}
    with no_grad():
        n_q, n_t = dec.features.shape[:2]
        logits = model.object_logits(dec.features, [(0, n_t)] * n_q, ctx.text_obj)
        scores = 1.0 / (1.0 + np.exp(-logits.data.astype(np.float64)))
    cost = D.assignment_cost(scores, dec.boxes.data.astype(np.float64), tg.classes, tg.boxes, tg.masks,
                             tcfg.match_cls, tcfg.match_box)
    return D.assign_targets(cost)


def detection_loss(model, dec, ctx, tg: SegmentTargets, matching: dict[int, int], box_weight: float = 5.0) -> Tensor:
    """Query-level supervision: CE + weighted box L1 for matched queries, presence BCE for all queries."""
    n_q, n_t = dec.presence.shape
    target = np.zeros((n_q, n_t))
    for g, q in matching.items():
        target[q] = tg.masks[g]
    pres = bce_sum(T.sigmoid(dec.presence), target).mean() * (1.0 / n_t)
    if not matching:
        return pres
    gs = sorted(matching)
    qs = np.array([matching[g] for g in gs])
    extents = [_extent(tg.masks[g]) for g in gs]
    ce = cross_entropy(model.object_logits(dec.features[qs], extents, ctx.text_obj), tg.classes[gs])
    mask = tg.masks[gs]
    l1 = T.absolute(dec.boxes[qs] - tg.boxes[gs]).sum(axis=-1)
    box = (l1 * (mask / mask.sum(-1, keepdims=True))).sum() * (box_weight / len(gs))
    return ce + box + pres


def segment_loss(model: RelationDetector, batch: SegmentBatch, vocab: Vocabulary, tcfg: TrainConfig) -> SegmentLoss:
    obj_ids, rel_ids = base_columns(vocab)
    tg = segment_targets(batch, vocab, tcfg.label_min_frames)
    ctx = model.encode(batch.frames, obj_ids, rel_ids)
    dec = model.decode(ctx)
    matching = match_queries(model, dec, ctx, tg, tcfg)
    det = detection_loss(model, dec, ctx, tg, matching, tcfg.det_box)

    pairs = []
    for gs in sorted(matching):
        for go in sorted(matching):
            if gs != go and np.any(tg.masks[gs] & tg.masks[go]):
                pairs.append((gs, go))
    zero = Tensor(0.0)
    rel_ctr = obj_ctr = box = cst = zero
    if pairs:
        qpairs = [(matching[a], matching[b]) for a, b in pairs]
        enh = model.enhance(dec.features, qpairs, ctx.enc.h_cls)
        r_tgt = np.zeros((len(pairs), len(rel_ids)))
        for i, (a, b) in enumerate(pairs):
            for c in tg.pair_labels.get((tg.tids[a], tg.tids[b]), ()):
                r_tgt[i, c] = 1.0
        rel_ctr = rel_contrastive_loss(model.relation_scores(enh.relation, ctx.text_rel), r_tgt)
        pmask = np.stack([tg.masks[a] & tg.masks[b] for a, b in pairs])
        extents = [_extent(m) for m in pmask]
        obj_ctr = obj_contrastive_loss(model.object_logits(enh.subj, extents, ctx.text_obj),
                                       model.object_logits(enh.obj, extents, ctx.text_obj),
                                       tg.classes[[a for a, _ in pairs]], tg.classes[[b for _, b in pairs]])
        pred = T.stack([model.box_head(enh.subj)[0], model.box_head(enh.obj)[0]], axis=1)
        gt = np.stack([tg.boxes[[a for a, _ in pairs]], tg.boxes[[b for _, b in pairs]]], axis=1)
        box, cst = trajectory_loss(pred, gt, pmask)
        l1 = T.absolute(pred - gt).sum(axis=-1).sum(axis=1)  # (P, T)
        det = det + (l1 * (pmask / pmask.sum(-1, keepdims=True))).sum() * (tcfg.det_box / len(pairs))
    if ctx.enc.c_obj is not None:
        obj_ctx, rel_ctx = contextual_losses(ctx.enc.c_obj, ctx.enc.c_rel, ctx.text_obj, ctx.text_rel,
                                             tg.presence_obj, tg.presence_rel,
                                             model.gamma_ctx_obj, model.gamma_ctx_rel)
    else:
        obj_ctx = rel_ctx = zero
    bd = total_loss(rel_ctr, obj_ctr, box, cst, rel_ctx, obj_ctx, det, tcfg.weights())
    return SegmentLoss(bd, matching, pairs, len(pairs))


@dataclass
class TrainResult:
    steps: int = 0
    records: list[dict] = field(default_factory=list)
    epoch_losses: list[dict] = field(default_factory=list)
    aborted: bool = False
    error: str | None = None
    checkpoint: str | None = None
    digest: str | None = None


def model_meta(model: RelationDetector, vocab: Vocabulary, extra: dict | None = None) -> dict:
    from dataclasses import asdict
    meta = {"model": asdict(model.cfg), "vocabulary": vocab.to_dict()}
    meta.update(extra or {})
    return meta


def save_model(path, model: RelationDetector, vocab: Vocabulary, extra: dict | None = None) -> str:
    return save_checkpoint(path, model.state_dict(), model_meta(model, vocab, extra))


def load_model(path) -> tuple[RelationDetector, Vocabulary, dict]:
    """Rebuild a detector (and its vocabulary) from a checkpoint written by ``save_model``."""
    tensors, meta = load_checkpoint(path)
    cfg = ModelConfig(**meta["model"])
    vocab = Vocabulary.from_dict(meta["vocabulary"])
    model = RelationDetector(cfg, vocab.object_names, vocab.relation_names)
    model.load_state_dict(tensors)
    return model, vocab, meta


def train(model: RelationDetector, videos: list[VideoSample], vocab: Vocabulary, tcfg: TrainConfig,
          out_dir=None, max_steps: int | None = None, progress=None) -> TrainResult:
    """One optimizer step per video (its segment losses averaged); checkpoint after every epoch.

    ``videos`` must already be training views (novel categories removed). A
    non-finite loss or gradient aborts training; the last completed epoch's
    checkpoint is left in place.
    """
    tcfg.validate()
    opt = AdamW(model.trainable_parameters(), lr=tcfg.lr, betas=tcfg.betas, weight_decay=tcfg.weight_decay,
                milestones=tcfg.milestones, factor=tcfg.factor)
    segs = {v.video_id: segmentize(v, tcfg.segment_length) for v in videos}
    out = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_fh = open(out / "train_log.jsonl", "w")
    result = TrainResult()
    ckpt = out / "model.ckpt" if out is not None else None
    if ckpt is not None:
        result.digest = save_model(ckpt, model, vocab, {"epoch": 0, "step": 0})
        result.checkpoint = str(ckpt)
    order = [v.video_id for v in videos]
    try:
        for epoch in range(tcfg.epochs):
            opt.set_epoch(epoch)
            ep_order = list(order)
            if tcfg.shuffle:
                stream(tcfg.seed, "shuffle", epoch).shuffle(ep_order)
            sums: dict[str, float] = {}
            for vid in ep_order:
                batches = [b for b in segs[vid] if b.frames is not None]
                if not batches:
                    continue
                opt.zero_grad()
                comp: dict[str, float] = {}
                for b in batches:
                    sl = segment_loss(model, b, vocab, tcfg)
                    (sl.breakdown.total * (1.0 / len(batches))).backward()
                    for k, v in sl.breakdown.values().items():
                        comp[k] = comp.get(k, 0.0) + v / len(batches)
                opt.step()
                result.steps += 1
                rec = {"step": result.steps, "epoch": epoch, "video": vid, "lr": opt.state.lr, **comp}
                result.records.append(rec)
                for k, v in comp.items():
                    sums[k] = sums.get(k, 0.0) + v
                if log_fh:
                    log_fh.write(json.dumps(rec) + "\n")
                    log_fh.flush()
                if progress:
                    progress(rec)
                if max_steps is not None and result.steps >= max_steps:
                    break
            n = max(1, sum(1 for r in result.records if r["epoch"] == epoch))
            result.epoch_losses.append({k: v / n for k, v in sums.items()})
            if ckpt is not None:
                result.digest = save_model(ckpt, model, vocab, {"epoch": epoch + 1, "step": result.steps})
            if max_steps is not None and result.steps >= max_steps:
                break
    except NonFiniteError as exc:
        T.get_tape().reset()
        result.aborted = True
        result.error = str(exc)
        log.error("training aborted at step %d: %s", result.steps + 1, exc)
    finally:
        if log_fh:
            log_fh.close()
    return result


