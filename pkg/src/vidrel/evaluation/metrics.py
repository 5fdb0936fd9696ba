"""Relation detection mAP / Recall@K, trajectory mAP, split filtering, error taxonomy."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data.types import ObjectTrack, RelationInstance, Trajectory, VideoSample, Vocabulary
from .viou import viou

SPLITS = ("all", "novel", "base")


def average_precision(tp, n_gt: int) -> float:
    """All-point interpolated AP of a ranked hit list against ``n_gt`` positives."""
    if n_gt == 0:
        return 0.0
    tp = np.asarray(tp, dtype=np.float64)
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    rec = ctp / n_gt
    prec = ctp / np.arange(1, len(tp) + 1)
    mrec = np.concatenate([[0.0], rec, [1.0]])
    mpre = np.concatenate([[0.0], prec, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def ranked(preds: list[RelationInstance]) -> list[RelationInstance]:
    return sorted(preds, key=lambda r: -(r.score or 0.0))


def match_relations(preds: list[RelationInstance], gts: list[RelationInstance],
                    viou_thresh: float = 0.5) -> tuple[list[bool], list[int | None]]:
    """Greedy by rank: each prediction claims the best unmatched GT with the same triplet
    whose subject and object vIoU both reach the threshold (best = larger min vIoU,
    earlier GT on ties). Returns per-prediction hit flags and matched GT indices.
    """
    used = [False] * len(gts)
    hits, which = [], []
    for p in preds:
        best, best_ov = None, -1.0
        for g, gt in enumerate(gts):
            if used[g] or gt.triplet != p.triplet:
                continue
            ov = min(viou(p.sub_traj, gt.sub_traj), viou(p.obj_traj, gt.obj_traj))
            if ov >= viou_thresh and ov > best_ov:
                best, best_ov = g, ov
        if best is not None:
            used[best] = True
        hits.append(best is not None)
        which.append(best)
    return hits, which


def relation_detection_map(preds: dict[str, list[RelationInstance]], gts: dict[str, list[RelationInstance]],
                           viou_thresh: float = 0.5) -> float | None:
    """Mean over videos with GT of each video's AP; None when no video has GT."""
    aps = []
    for vid, gt in gts.items():
        if not gt:
            continue
        hits, _ = match_relations(ranked(preds.get(vid, [])), gt, viou_thresh)
        aps.append(average_precision(hits, len(gt)))
    return float(np.mean(aps)) if aps else None


def recall_at_k(preds, gts, k: int, viou_thresh: float = 0.5) -> float | None:
    recs = []
    for vid, gt in gts.items():
        if not gt:
            continue
        hits, _ = match_relations(ranked(preds.get(vid, []))[:k], gt, viou_thresh)
        recs.append(sum(hits) / len(gt))
    return float(np.mean(recs)) if recs else None


@dataclass
class ObjectPrediction:
    category: int
    score: float
    traj: Trajectory


def trajectory_ap_per_category(preds: dict[str, list[ObjectPrediction]], gts: dict[str, list[ObjectTrack]],
                               viou_thresh: float = 0.5) -> dict[int, float]:
    cats = sorted({o.category for g in gts.values() for o in g})
    out = {}
    for c in cats:
        pool = [(p.score, vid, i, p) for vid, ps in preds.items() for i, p in enumerate(ps) if p.category == c]
        pool.sort(key=lambda x: (-x[0], x[1], x[2]))
        gt_c = {vid: [o for o in g if o.category == c] for vid, g in gts.items()}
        used = {vid: [False] * len(g) for vid, g in gt_c.items()}
        n_gt = sum(len(g) for g in gt_c.values())
        hits = []
        for _, vid, _, p in pool:
            best, best_ov = None, -1.0
            for g, gt in enumerate(gt_c.get(vid, [])):
                if used[vid][g]:
                    continue
                ov = viou(p.traj, gt.traj)
                if ov >= viou_thresh and ov > best_ov:
                    best, best_ov = g, ov
            if best is not None:
                used[vid][best] = True
            hits.append(best is not None)
        out[c] = average_precision(hits, n_gt)
    return out


def trajectory_map(preds, gts, viou_thresh: float = 0.5) -> float | None:
    aps = trajectory_ap_per_category(preds, gts, viou_thresh)
    return float(np.mean(list(aps.values()))) if aps else None


def filter_split(preds: dict[str, list[RelationInstance]], gts: dict[str, list[RelationInstance]],
                 vocab: Vocabulary, split: str):
    """Restrict relations to an evaluation split.

    all   - unchanged
    novel - relations whose predicate is novel (any object categories)
    base  - base predicate with base subject and object (the training targets)
    """
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}; expected one of {SPLITS}")
    if split == "all":
        return preds, gts
    novel_r = set(vocab.novel_relations())
    base_o = set(vocab.base_objects())
    if split == "novel":
        keep = lambda r: r.predicate in novel_r  # noqa: E731
    else:
        keep = lambda r: r.predicate not in novel_r and r.subject in base_o and r.object in base_o  # noqa: E731
    return ({v: [r for r in ps if keep(r)] for v, ps in preds.items()},
            {v: [r for r in gs if keep(r)] for v, gs in gts.items()})


def categorize_errors(preds: dict[str, list[RelationInstance]], gts: dict[str, VideoSample],
                      examine_top_k: int = 100, viou_thresh: float = 0.5,
                      relations: dict[str, list[RelationInstance]] | None = None) -> tuple[int, int]:
    """Split the false positives among each video's top-k predictions.

    A false positive is an object error (OE) unless some ordered pair of GT tracks
    has the predicted subject/object categories and both trajectories (clipped to
    the prediction's span) reach the vIoU threshold, in which case the entities were
    right and it is a relationship error (RE). ``relations`` overrides the GT
    relations used for the TP rule (e.g. after split filtering).
    """
    oe = re_ = 0
    for vid, sample in gts.items():
        gt_rel = relations[vid] if relations is not None else sample.relations
        top = ranked(preds.get(vid, []))[:examine_top_k]
        hits, _ = match_relations(top, gt_rel, viou_thresh)
        for p, hit in zip(top, hits):
            if hit:
                continue
            if entities_correct(p, sample.objects, viou_thresh):
                re_ += 1
            else:
                oe += 1
    return oe, re_


def _localized(traj: Trajectory, track: ObjectTrack, thresh: float) -> bool:
    clipped = track.traj.clip(traj.begin_fid, traj.end_fid)
    return clipped is not None and viou(traj, clipped) >= thresh


def entities_correct(p: RelationInstance, objects: list[ObjectTrack], thresh: float = 0.5) -> bool:
    for s in objects:
        if s.category != p.subject or not _localized(p.sub_traj, s, thresh):
            continue
        for o in objects:
            if o.tid != s.tid and o.category == p.object and _localized(p.obj_traj, o, thresh):
                return True
    return False


def top1_relation_accuracy(scores: np.ndarray, label_sets: list[set[int]]) -> float | None:
    """Fraction of pairs whose highest-scoring relation is one of its GT relations."""
    if len(label_sets) == 0:
        return None
    top = np.argmax(np.asarray(scores), axis=-1)
    return float(np.mean([int(t) in labels for t, labels in zip(top, label_sets)]))


@dataclass
class EvalReport:
    split: str
    mAP: float | None
    recall_50: float | None
    recall_100: float | None
    mAP_o: float | None
    object_errors: int = 0
    relationship_errors: int = 0
    examined_false_positives: int = 0
    per_category_ap: dict[str, float] = field(default_factory=dict)
    num_gt: int = 0
    num_videos: int = 0

    def to_dict(self):
        return {
            "split": self.split, "mAP": self.mAP, "R@50": self.recall_50, "R@100": self.recall_100,
            "mAP_o": self.mAP_o,
            "errors": {"object_errors": self.object_errors, "relationship_errors": self.relationship_errors,
                       "examined_false_positives": self.examined_false_positives},
            "per_category_ap": self.per_category_ap, "num_gt": self.num_gt, "num_videos": self.num_videos,
        }


def evaluate(preds: dict[str, list[RelationInstance]], obj_preds: dict[str, list[ObjectPrediction]],
             samples: dict[str, VideoSample], vocab: Vocabulary, split: str = "all",
             viou_thresh: float = 0.5, examine_top_k: int = 100) -> EvalReport:
    """Full report for one split; metrics are None (the undefined marker) when the split has no GT."""
    gts = {v: s.relations for v, s in samples.items()}
    p, g = filter_split(preds, gts, vocab, split)
    obj_gts = {v: s.objects for v, s in samples.items()}
    if split == "base":
        base_o = set(vocab.base_objects())
        obj_gts = {v: [o for o in objs if o.category in base_o] for v, objs in obj_gts.items()}
    n_gt = sum(len(x) for x in g.values())
    oe, re_ = categorize_errors(p, samples, examine_top_k, viou_thresh, relations=g)
    per_cat = trajectory_ap_per_category(obj_preds, obj_gts, viou_thresh) if n_gt else {}
    return EvalReport(
        split=split,
        mAP=relation_detection_map(p, g, viou_thresh),
        recall_50=recall_at_k(p, g, 50, viou_thresh),
        recall_100=recall_at_k(p, g, 100, viou_thresh),
        mAP_o=float(np.mean(list(per_cat.values()))) if per_cat else None,
        object_errors=oe, relationship_errors=re_, examined_false_positives=oe + re_,
        per_category_ap={vocab.objects[c].name: ap for c, ap in per_cat.items()},
        num_gt=n_gt, num_videos=len(samples),
    )
