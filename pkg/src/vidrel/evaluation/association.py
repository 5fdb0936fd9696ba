"""Greedy merging of per-segment relation triplets into video-level instances."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data.types import RelationInstance, Trajectory
from .viou import box_iou, viou


@dataclass
class SegmentPrediction:
    index: int
    start: int
    end: int
    relations: list[RelationInstance]


@dataclass
class _Track:
    triplet: tuple[int, int, int]
    sub: Trajectory
    obj: Trajectory
    scores: list[float]
    last_segment: int
    order: int
    members: list[tuple[int, int]] = field(default_factory=list)


def rank_key(r: RelationInstance):
    return (-(r.score or 0.0), r.triplet)


def link_strength(sub: Trajectory, obj: Trajectory, rel: RelationInstance) -> float | None:
    """Boundary agreement between a track and a new triplet, or None if not adjacent.

    Contiguous extents compare the last box of the track with the first box of
    the triplet; overlapping extents compare vIoU on the overlap window.
    The weaker of the subject/object agreements is returned.
    """
    rs, ro = rel.sub_traj, rel.obj_traj
    begin = max(rs.begin_fid, ro.begin_fid)
    end_prev = min(sub.end_fid, obj.end_fid)
    if begin == end_prev:
        s = float(box_iou(sub.boxes[-1], rs.boxes[begin - rs.begin_fid]))
        o = float(box_iou(obj.boxes[-1], ro.boxes[begin - ro.begin_fid]))
        return min(s, o)
    if begin < end_prev:
        ws, wo = sub.clip(begin, end_prev), obj.clip(begin, end_prev)
        rs_c, ro_c = rs.clip(begin, end_prev), ro.clip(begin, end_prev)
        if ws is None or wo is None or rs_c is None or ro_c is None:
            return None
        return min(viou(ws, rs_c), viou(wo, ro_c))
    return None


def _extend(a: Trajectory, b: Trajectory) -> Trajectory:
    """Append ``b`` to ``a``; boxes in the overlap are averaged."""
    begin, end = a.begin_fid, max(a.end_fid, b.end_fid)
    boxes = np.zeros((end - begin, 4))
    count = np.zeros(end - begin)
    boxes[:len(a)] += a.boxes
    count[:len(a)] += 1
    off = b.begin_fid - begin
    boxes[off:off + len(b)] += b.boxes
    count[off:off + len(b)] += 1
    if np.any(count == 0):
        raise ValueError("trajectories are not contiguous")
    return Trajectory(begin, end, boxes / count[:, None])


def greedy_associate(segments: list[SegmentPrediction], merge_iou: float = 0.5,
                     score_mode: str = "mean", return_members: bool = False):
    """Segment by segment (temporal order), triplets in descending score extend at most
    one track from the previous segment with the same (s, r, o) whose boundary
    agreement is >= ``merge_iou`` (the strongest link wins, earlier track on ties);
    otherwise they open a new track. Returns instances sorted by merged score,
    plus each instance's (segment index, triplet index) members if asked.
    """
    if score_mode not in ("mean", "max"):
        raise ValueError(f"unknown score mode {score_mode}")
    tracks: list[_Track] = []
    for seg in sorted(segments, key=lambda s: s.index):
        extended: set[int] = set()
        for j, rel in sorted(enumerate(seg.relations), key=lambda x: (rank_key(x[1]), x[0])):
            best, best_strength = None, -1.0
            for k, tr in enumerate(tracks):
                if k in extended or tr.last_segment != seg.index - 1 or tr.triplet != rel.triplet:
                    continue
                strength = link_strength(tr.sub, tr.obj, rel)
                if strength is None or strength < merge_iou:
                    continue
                if strength > best_strength:
                    best, best_strength = k, strength
            if best is None:
                tracks.append(_Track(rel.triplet, rel.sub_traj, rel.obj_traj, [rel.score or 0.0],
                                     seg.index, len(tracks), [(seg.index, j)]))
                extended.add(len(tracks) - 1)
            else:
                tr = tracks[best]
                tr.sub, tr.obj = _extend(tr.sub, rel.sub_traj), _extend(tr.obj, rel.obj_traj)
                tr.scores.append(rel.score or 0.0)
                tr.last_segment = seg.index
                tr.members.append((seg.index, j))
                extended.add(best)
    out = []
    for tr in tracks:
        score = float(np.mean(tr.scores)) if score_mode == "mean" else float(max(tr.scores))
        s, r, o = tr.triplet
        out.append((tr.order, tr.members, RelationInstance(s, r, o, tr.sub, tr.obj, score)))
    out.sort(key=lambda x: (-x[2].score, x[0]))
    if return_members:
        return [r for _, _, r in out], [m for _, m, _ in out]
    return [r for _, _, r in out]


def associate_objects(segments: list[list], merge_iou: float = 0.5):
    """Link per-segment object trajectories into video-level ones with the same rule as
    relations: same category, adjacent segments, boundary agreement >= ``merge_iou``.

    ``segments[i]`` is segment i's list of ``(category, score, Trajectory)``.
    Returns ``(category, mean score, Trajectory)`` sorted by score.
    """
    tracks: list[list] = []   # [category, traj, scores, last_segment, order]
    for si, items in enumerate(segments):
        extended: set[int] = set()
        for j, (cat, score, traj) in sorted(enumerate(items), key=lambda x: (-x[1][1], x[1][0], x[0])):
            best, best_strength = None, -1.0
            for k, tr in enumerate(tracks):
                if k in extended or tr[3] != si - 1 or tr[0] != cat:
                    continue
                probe = RelationInstance(cat, 0, cat, traj, traj)
                strength = link_strength(tr[1], tr[1], probe)
                if strength is not None and strength >= merge_iou and strength > best_strength:
                    best, best_strength = k, strength
            if best is None:
                tracks.append([cat, traj, [score], si, len(tracks)])
                extended.add(len(tracks) - 1)
            else:
                tr = tracks[best]
                tr[1] = _extend(tr[1], traj)
                tr[2].append(score)
                tr[3] = si
                extended.add(best)
    out = [(tr[0], float(np.mean(tr[2])), tr[1], tr[4]) for tr in tracks]
    out.sort(key=lambda x: (-x[1], x[3]))
    return [(c, s, t) for c, s, t, _ in out]
