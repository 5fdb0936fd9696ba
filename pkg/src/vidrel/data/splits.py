"""Base/novel category partition and the base-only view used for training."""
from __future__ import annotations

import math
from collections import Counter

from .types import Category, VideoSample, Vocabulary


def _rarest(counts: Counter, n_cats: int, fraction: float, kind: str) -> set[int]:
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"{kind} novel fraction must be in [0, 1), got {fraction}")
    n_novel = math.ceil(fraction * n_cats)
    if n_novel >= n_cats:
        raise ValueError(f"{kind} novel fraction {fraction} leaves no base categories")
    order = sorted(range(n_cats), key=lambda c: (counts.get(c, 0), c))
    return set(order[:n_novel])


def split_vocabulary(vocab: Vocabulary, videos: list[VideoSample], novel_fraction_obj: float,
                     novel_fraction_rel: float) -> Vocabulary:
    """Mark the ceil(fraction * n) rarest categories of each kind as novel.

    Rarity is the GT instance count over ``videos`` (object tracks, relation
    instances); ties go to the lower category id first.
    """
    obj_counts = Counter(o.category for v in videos for o in v.objects)
    rel_counts = Counter(r.predicate for v in videos for r in v.relations)
    novel_o = _rarest(obj_counts, len(vocab.objects), novel_fraction_obj, "object")
    novel_r = _rarest(rel_counts, len(vocab.relations), novel_fraction_rel, "relation")
    return Vocabulary([Category(c.id, c.name, c.id in novel_o) for c in vocab.objects],
                      [Category(c.id, c.name, c.id in novel_r) for c in vocab.relations])


def training_view(video: VideoSample, vocab: Vocabulary) -> VideoSample:
    """Copy of ``video`` with every novel object track and novel/dangling relation removed."""
    base_o, base_r = set(vocab.base_objects()), set(vocab.base_relations())
    objects = [o for o in video.objects if o.category in base_o]
    kept = {o.tid for o in objects}
    relations = [r for r in video.relations
                 if r.predicate in base_r and r.subject_tid in kept and r.object_tid in kept]
    return VideoSample(video.video_id, video.frame_count, video.width, video.height,
                       objects, relations, video.frames)
