"""Segment inference -> triplets -> association -> evaluation reports and diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core.tensor import no_grad
from .data.segments import segmentize
from .data.types import RelationInstance, Trajectory, VideoSample, Vocabulary
from .evaluation.association import SegmentPrediction, associate_objects, greedy_associate
from .evaluation.metrics import EvalReport, ObjectPrediction, evaluate, top1_relation_accuracy
from .model.detector import to_pixel_boxes
from .model.network import RelationDetector, SegmentOutput, run_segment


@dataclass
class EvalConfig:
    split: str = "all"
    viou_threshold: float = 0.5
    merge_iou: float = 0.5
    examine_top_k: int = 100
    score_mode: str = "mean"
    segment_length: int = 30
    max_triplets_per_segment: int | None = None
    min_triplet_score: float = 0.1   # drop before association so absent relations do not extend tracks


def segment_triplets(out: SegmentOutput, start: int, width: int, height: int,
                     obj_ids: np.ndarray, rel_ids: np.ndarray) -> list[RelationInstance]:
    """Every (argmax subject, relation, argmax object) triplet of every pair, score S_s * S_r * S_o."""
    rels = []
    for i, (b, e) in enumerate(out.pair_extents):
        si, oi = int(np.argmax(out.subject_scores[i])), int(np.argmax(out.object_scores[i]))
        ss, so = float(out.subject_scores[i, si]), float(out.object_scores[i, oi])
        sub = Trajectory(start + b, start + e, to_pixel_boxes(out.subject_boxes[i, b:e], width, height))
        obj = Trajectory(start + b, start + e, to_pixel_boxes(out.object_boxes[i, b:e], width, height))
        for r in range(len(rel_ids)):
            score = ss * float(out.relation_scores[i, r]) * so
            rels.append(RelationInstance(int(obj_ids[si]), int(rel_ids[r]), int(obj_ids[oi]), sub, obj,
                                         min(1.0, max(0.0, score))))
    return rels


def segment_objects(out: SegmentOutput, start: int, width: int, height: int, obj_ids: np.ndarray):
    items = []
    for c in out.candidates:
        b, e = c.extent
        k = int(np.argmax(c.scores))
        items.append((int(obj_ids[k]), float(c.scores[k]),
                      Trajectory(start + b, start + e, to_pixel_boxes(c.boxes[b:e], width, height))))
    return items


def predict_video(model: RelationDetector, video: VideoSample, ecfg: EvalConfig | None = None):
    """(associated relation instances, associated object predictions) for one video."""
    ecfg = ecfg or EvalConfig()
    obj_ids = np.arange(len(model.object_names))
    rel_ids = np.arange(len(model.relation_names))
    seg_preds, seg_objs = [], []
    with no_grad():
        for i, batch in enumerate(segmentize(video, ecfg.segment_length)):
            out = run_segment(model, batch.frames, obj_ids, rel_ids)
            rels = segment_triplets(out, batch.start, batch.width, batch.height, obj_ids, rel_ids)
            rels = [r for r in rels if r.score >= ecfg.min_triplet_score]
            rels.sort(key=lambda r: -r.score)
            if ecfg.max_triplets_per_segment is not None:
                rels = rels[:ecfg.max_triplets_per_segment]
            seg_preds.append(SegmentPrediction(i, batch.start, batch.end, rels))
            seg_objs.append(segment_objects(out, batch.start, batch.width, batch.height, obj_ids))
    relations = greedy_associate(seg_preds, ecfg.merge_iou, ecfg.score_mode)
    objects = [ObjectPrediction(c, s, t) for c, s, t in associate_objects(seg_objs, ecfg.merge_iou)]
    return relations, objects


def predict_corpus(model: RelationDetector, videos: list[VideoSample], ecfg: EvalConfig | None = None):
    preds, objs = {}, {}
    for v in videos:
        preds[v.video_id], objs[v.video_id] = predict_video(model, v, ecfg)
    return preds, objs


def evaluate_model(model: RelationDetector, videos: list[VideoSample], vocab: Vocabulary,
                   ecfg: EvalConfig | None = None, predictions=None) -> EvalReport:
    ecfg = ecfg or EvalConfig()
    check_vocabulary(model, vocab)
    preds, objs = predictions if predictions is not None else predict_corpus(model, videos, ecfg)
    samples = {v.video_id: v for v in videos}
    return evaluate(preds, objs, samples, vocab, ecfg.split, ecfg.viou_threshold, ecfg.examine_top_k)


class VocabularyMismatch(ValueError):
    pass


def check_vocabulary(model: RelationDetector, vocab: Vocabulary):
    names_o = [c.name for c in vocab.objects]
    names_r = [c.name for c in vocab.relations]
    if names_o != model.object_names or names_r != model.relation_names:
        raise VocabularyMismatch("checkpoint vocabulary differs from the corpus vocabulary")


def oracle_object_eval(model: RelationDetector, videos: list[VideoSample], vocab: Vocabulary,
                       tcfg=None) -> dict:
    """Top-1 relation accuracy on GT-matched pairs only, isolating relation recognition
    from detection. Queries are matched to GT tracks with the training assignment; a
    pair counts if it has at least one (base or novel) GT relation in the segment.
    """
    from .training import TrainConfig, match_queries, segment_targets
    tcfg = tcfg or TrainConfig()
    obj_ids = np.arange(len(vocab.objects))
    rel_ids = np.arange(len(vocab.relations))
    scores, labels = [], []
    with no_grad():
        for v in videos:
            for batch in segmentize(v, tcfg.segment_length):
                tg = _all_category_targets(batch, vocab, tcfg.label_min_frames, segment_targets)
                ctx = model.encode(batch.frames, obj_ids, rel_ids)
                dec = model.decode(ctx)
                matching = match_queries(model, dec, ctx, tg, tcfg)
                pairs, pair_labels = [], []
                for a in sorted(matching):
                    for b in sorted(matching):
                        lab = tg.pair_labels.get((tg.tids[a], tg.tids[b]))
                        if a != b and lab:
                            pairs.append((matching[a], matching[b]))
                            pair_labels.append(lab)
                if not pairs:
                    continue
                enh = model.enhance(dec.features, pairs, ctx.enc.h_cls)
                scores.append(model.relation_scores(enh.relation, ctx.text_rel).data.astype(np.float64))
                labels.extend(pair_labels)
    acc = top1_relation_accuracy(np.concatenate(scores), labels) if scores else None
    return {"relation_accuracy": acc, "pairs": len(labels)}


def _all_category_targets(batch, vocab, label_min_frames, segment_targets):
    """Targets with every category treated as a training column (diagnostics only)."""
    everything = Vocabulary.from_names(vocab.object_names, vocab.relation_names)
    return segment_targets(batch, everything, label_min_frames)
