"""Prediction dump: one JSON document per video, ranked relation list + object trajectories."""
from __future__ import annotations

import json
from pathlib import Path

from ..data.types import RelationInstance, Trajectory, Vocabulary
from .metrics import ObjectPrediction

FORMAT_VERSION = 1


def _traj(t: Trajectory) -> dict:
    return {"begin_fid": t.begin_fid, "end_fid": t.end_fid, "boxes": [[float(x) for x in b] for b in t.boxes]}


def _untraj(d) -> Trajectory:
    return Trajectory(int(d["begin_fid"]), int(d["end_fid"]), d["boxes"])


def video_document(video_id: str, relations: list[RelationInstance], objects: list[ObjectPrediction],
                   vocab: Vocabulary) -> dict:
    rels = sorted(relations, key=lambda r: -(r.score or 0.0))
    return {
        "version": FORMAT_VERSION,
        "video_id": video_id,
        "relations": [{
            "subject_category": vocab.objects[r.subject].name,
            "predicate": vocab.relations[r.predicate].name,
            "object_category": vocab.objects[r.object].name,
            "score": float(r.score or 0.0),
            "subject_traj": _traj(r.sub_traj),
            "object_traj": _traj(r.obj_traj),
        } for r in rels],
        "objects": [{"category": vocab.objects[o.category].name, "score": float(o.score), "traj": _traj(o.traj)}
                    for o in objects],
    }


def parse_document(doc: dict, vocab: Vocabulary):
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported prediction dump version {doc.get('version')}")
    rels = [RelationInstance(vocab.object_id(r["subject_category"]), vocab.relation_id(r["predicate"]),
                             vocab.object_id(r["object_category"]), _untraj(r["subject_traj"]),
                             _untraj(r["object_traj"]), float(r["score"]))
            for r in doc["relations"]]
    objs = [ObjectPrediction(vocab.object_id(o["category"]), float(o["score"]), _untraj(o["traj"]))
            for o in doc.get("objects", [])]
    return doc["video_id"], rels, objs


def dump_predictions(out_dir, preds: dict, obj_preds: dict, vocab: Vocabulary):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for vid in preds:
        doc = video_document(vid, preds[vid], obj_preds.get(vid, []), vocab)
        (out / f"{vid}.json").write_text(json.dumps(doc))


def load_predictions(in_dir, vocab: Vocabulary):
    preds, objs = {}, {}
    for path in sorted(Path(in_dir).glob("*.json")):
        vid, rels, ob = parse_document(json.loads(path.read_text()), vocab)
        preds[vid], objs[vid] = rels, ob
    return preds, objs
