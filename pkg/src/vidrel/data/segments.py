"""Cut videos into fixed-length segments with clipped annotations."""
from __future__ import annotations

import logging

from .types import ObjectTrack, RelationInstance, SegmentBatch, VideoSample

log = logging.getLogger(__name__)

SEGMENT_LENGTH = 30
MIN_RELATION_OVERLAP = 2


def segmentize(video: VideoSample, length: int = SEGMENT_LENGTH, stride: int | None = None) -> list[SegmentBatch]:
    """Windows [s, s + length) for s = 0, stride, ...; a trailing partial window is dropped."""
    stride = stride or length
    if video.frame_count < length:
        log.warning("%s has %d frames (< %d); no segments", video.video_id, video.frame_count, length)
        return []
    out = []
    for start in range(0, video.frame_count - length + 1, stride):
        end = start + length
        objects = []
        for o in video.objects:
            clipped = o.traj.clip(start, end)
            if clipped is not None:
                objects.append(ObjectTrack(o.tid, o.category, clipped))
        relations = []
        for r in video.relations:
            b, e = max(r.begin_fid, start), min(r.end_fid, end)
            if e - b < MIN_RELATION_OVERLAP:
                continue
            relations.append(RelationInstance(r.subject, r.predicate, r.object,
                                              r.sub_traj.clip(b, e), r.obj_traj.clip(b, e),
                                              r.score, r.subject_tid, r.object_tid))
        frames = video.frames[start:end] if video.frames is not None else None
        out.append(SegmentBatch(video.video_id, start, end, frames, objects, relations,
                                video.width, video.height))
    return out
