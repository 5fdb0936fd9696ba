"""VidVRD-style annotation files and on-disk corpus layout.

Corpus directory::

    vocabulary.json           categories with base/novel flags
    splits.json               train/test video ids
    annotations/<vid>.json    one annotation document per video
    frames/<vid>.npy          uint8 frames (T, H, W, 3)
    manifest.json             generator seed + config
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .types import ObjectTrack, RelationInstance, Trajectory, VideoSample, Vocabulary


class AnnotationError(ValueError):
    pass


def to_document(video: VideoSample, vocab: Vocabulary) -> dict:
    per_frame = [[] for _ in range(video.frame_count)]
    for o in video.objects:
        for t in range(o.traj.begin_fid, o.traj.end_fid):
            x0, y0, x1, y1 = (float(v) for v in o.traj.boxes[t - o.traj.begin_fid])
            per_frame[t].append({"tid": o.tid, "bbox": {"xmin": x0, "ymin": y0, "xmax": x1, "ymax": y1}})
    return {
        "video_id": video.video_id,
        "frame_count": video.frame_count,
        "width": video.width,
        "height": video.height,
        "subject/objects": [{"tid": o.tid, "category": vocab.objects[o.category].name} for o in video.objects],
        "trajectories": per_frame,
        "relation_instances": [
            {"subject_tid": r.subject_tid, "object_tid": r.object_tid,
             "predicate": vocab.relations[r.predicate].name,
             "begin_fid": r.begin_fid, "end_fid": r.end_fid}
            for r in video.relations
        ],
    }


def from_document(doc: dict, vocab: Vocabulary) -> VideoSample:
    n = int(doc["frame_count"])
    if len(doc["trajectories"]) != n:
        raise AnnotationError(f"{doc['video_id']}: {len(doc['trajectories'])} trajectory frames, expected {n}")
    frames_of: dict[int, list[tuple[int, list[float]]]] = {}
    for t, entries in enumerate(doc["trajectories"]):
        for e in entries:
            b = e["bbox"]
            frames_of.setdefault(int(e["tid"]), []).append((t, [b["xmin"], b["ymin"], b["xmax"], b["ymax"]]))
    objects = []
    for so in doc["subject/objects"]:
        tid = int(so["tid"])
        try:
            cat = vocab.object_id(so["category"])
        except KeyError as exc:
            raise AnnotationError(str(exc)) from None
        entries = frames_of.get(tid)
        if not entries:
            raise AnnotationError(f"track {tid} has no boxes")
        fids = [t for t, _ in entries]
        if fids != list(range(fids[0], fids[0] + len(fids))):
            raise AnnotationError(f"track {tid} frames are not contiguous")
        objects.append(ObjectTrack(tid, cat, Trajectory(fids[0], fids[-1] + 1, [b for _, b in entries])))
    known = {o.tid: o for o in objects}
    stray = set(frames_of) - set(known)
    if stray:
        raise AnnotationError(f"boxes reference undeclared track ids {sorted(stray)}")
    relations = []
    for r in doc["relation_instances"]:
        s_tid, o_tid = int(r["subject_tid"]), int(r["object_tid"])
        if s_tid not in known or o_tid not in known:
            raise AnnotationError(f"dangling track id in relation {r}")
        try:
            pred = vocab.relation_id(r["predicate"])
        except KeyError as exc:
            raise AnnotationError(str(exc)) from None
        b, e = int(r["begin_fid"]), int(r["end_fid"])
        if not 0 <= b < e <= n:
            raise AnnotationError(f"malformed frame range [{b}, {e})")
        st, ot = known[s_tid].traj.clip(b, e), known[o_tid].traj.clip(b, e)
        if st is None or ot is None or len(st) != e - b or len(ot) != e - b:
            raise AnnotationError(f"relation range [{b}, {e}) not covered by both tracks")
        relations.append(RelationInstance(known[s_tid].category, pred, known[o_tid].category, st, ot,
                                          subject_tid=s_tid, object_tid=o_tid))
    return VideoSample(doc["video_id"], n, int(doc["width"]), int(doc["height"]), objects, relations)


def save_annotations(path, video: VideoSample, vocab: Vocabulary):
    Path(path).write_text(json.dumps(to_document(video, vocab), indent=1))


def load_annotations(path, vocab: Vocabulary) -> VideoSample:
    return from_document(json.loads(Path(path).read_text()), vocab)


# --- corpus directories ---------------------------------------------------------

def save_corpus(out_dir, videos, vocab: Vocabulary, splits: dict, manifest: dict):
    out = Path(out_dir)
    (out / "annotations").mkdir(parents=True, exist_ok=True)
    (out / "frames").mkdir(exist_ok=True)
    (out / "vocabulary.json").write_text(json.dumps(vocab.to_dict(), indent=1))
    (out / "splits.json").write_text(json.dumps(splits, indent=1))
    for v in videos:
        save_annotations(out / "annotations" / f"{v.video_id}.json", v, vocab)
        frames = np.round(v.frames * 255).astype(np.uint8)
        with open(out / "frames" / f"{v.video_id}.npy", "wb") as fh:
            np.save(fh, frames)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_vocabulary(corpus_dir) -> Vocabulary:
    return Vocabulary.from_dict(json.loads((Path(corpus_dir) / "vocabulary.json").read_text()))


def load_corpus(corpus_dir, split: str | None = None, with_frames: bool = True):
    """(videos, vocab, splits); ``split`` picks 'train' / 'test' ids from splits.json."""
    root = Path(corpus_dir)
    vocab = load_vocabulary(root)
    splits = json.loads((root / "splits.json").read_text())
    ids = splits[split] if split else splits["train"] + splits["test"]
    videos = []
    for vid in ids:
        v = load_annotations(root / "annotations" / f"{vid}.json", vocab)
        if with_frames:
            v.frames = np.load(root / "frames" / f"{vid}.npy").astype(np.float32) / 255.0
        videos.append(v)
    return videos, vocab, splits
