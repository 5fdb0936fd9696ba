"""Annotation records: categories, boxes, trajectories, relation instances."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    is_novel: bool = False


@dataclass
class Vocabulary:
    objects: list[Category]
    relations: list[Category]

    def __post_init__(self):
        for kind, cats in (("object", self.objects), ("relation", self.relations)):
            if [c.id for c in cats] != list(range(len(cats))):
                raise ValueError(f"{kind} category ids must be dense from 0")
            names = [c.name for c in cats]
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate {kind} category names")

    @classmethod
    def from_names(cls, objects, relations, novel_objects=(), novel_relations=()):
        return cls([Category(i, n, n in novel_objects) for i, n in enumerate(objects)],
                   [Category(i, n, n in novel_relations) for i, n in enumerate(relations)])

    @property
    def object_names(self):
        return [c.name for c in self.objects]

    @property
    def relation_names(self):
        return [c.name for c in self.relations]

    def object_id(self, name: str) -> int:
        for c in self.objects:
            if c.name == name:
                return c.id
        raise KeyError(f"unknown object category {name!r}")

    def relation_id(self, name: str) -> int:
        for c in self.relations:
            if c.name == name:
                return c.id
        raise KeyError(f"unknown relation category {name!r}")

    def base_objects(self):
        return [c.id for c in self.objects if not c.is_novel]

    def novel_objects(self):
        return [c.id for c in self.objects if c.is_novel]

    def base_relations(self):
        return [c.id for c in self.relations if not c.is_novel]

    def novel_relations(self):
        return [c.id for c in self.relations if c.is_novel]

    def to_dict(self):
        return {
            "objects": [{"id": c.id, "name": c.name, "novel": c.is_novel} for c in self.objects],
            "relations": [{"id": c.id, "name": c.name, "novel": c.is_novel} for c in self.relations],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([Category(c["id"], c["name"], bool(c["novel"])) for c in d["objects"]],
                   [Category(c["id"], c["name"], bool(c["novel"])) for c in d["relations"]])


@dataclass(frozen=True)
class BBox:
    """Corner-form pixel box."""
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"degenerate box {self}")

    def to_normalized(self, width: int, height: int):
        """(cx, cy, w, h) in [0, 1]."""
        return ((self.xmin + self.xmax) / (2 * width), (self.ymin + self.ymax) / (2 * height),
                (self.xmax - self.xmin) / width, (self.ymax - self.ymin) / height)

    @classmethod
    def from_normalized(cls, cx, cy, w, h, width: int, height: int):
        return cls((cx - w / 2) * width, (cy - h / 2) * height,
                   (cx + w / 2) * width, (cy + h / 2) * height)

    def as_array(self):
        return np.array([self.xmin, self.ymin, self.xmax, self.ymax])


def corners_to_normalized(boxes, width, height):
    boxes = np.asarray(boxes, dtype=np.float64)
    out = np.empty_like(boxes)
    out[..., 0] = (boxes[..., 0] + boxes[..., 2]) / (2 * width)
    out[..., 1] = (boxes[..., 1] + boxes[..., 3]) / (2 * height)
    out[..., 2] = (boxes[..., 2] - boxes[..., 0]) / width
    out[..., 3] = (boxes[..., 3] - boxes[..., 1]) / height
    return out


def normalized_to_corners(boxes, width, height):
    boxes = np.asarray(boxes, dtype=np.float64)
    out = np.empty_like(boxes)
    out[..., 0] = (boxes[..., 0] - boxes[..., 2] / 2) * width
    out[..., 1] = (boxes[..., 1] - boxes[..., 3] / 2) * height
    out[..., 2] = (boxes[..., 0] + boxes[..., 2] / 2) * width
    out[..., 3] = (boxes[..., 1] + boxes[..., 3] / 2) * height
    return out


@dataclass
class Trajectory:
    """Boxes (corner form, pixels) for frames ``begin_fid <= t < end_fid``."""
    begin_fid: int
    end_fid: int
    boxes: np.ndarray

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        if self.end_fid - self.begin_fid <= 0 or len(self.boxes) != self.end_fid - self.begin_fid:
            raise ValueError(f"trajectory [{self.begin_fid}, {self.end_fid}) has {len(self.boxes)} boxes")

    def __len__(self):
        return self.end_fid - self.begin_fid

    def __eq__(self, other):
        return (isinstance(other, Trajectory) and self.begin_fid == other.begin_fid
                and self.end_fid == other.end_fid and np.array_equal(self.boxes, other.boxes))

    def box(self, fid: int) -> BBox:
        return BBox(*self.boxes[fid - self.begin_fid])

    def clip(self, begin: int, end: int) -> "Trajectory | None":
        b, e = max(begin, self.begin_fid), min(end, self.end_fid)
        if e <= b:
            return None
        return Trajectory(b, e, self.boxes[b - self.begin_fid:e - self.begin_fid])

    def shift(self, offset: int) -> "Trajectory":
        return Trajectory(self.begin_fid + offset, self.end_fid + offset, self.boxes)


@dataclass
class ObjectTrack:
    tid: int
    category: int
    traj: Trajectory


@dataclass
class RelationInstance:
    """(subject, predicate, object) category ids with the two trajectories."""
    subject: int
    predicate: int
    object: int
    sub_traj: Trajectory
    obj_traj: Trajectory
    score: float | None = None
    subject_tid: int | None = None
    object_tid: int | None = None

    def __post_init__(self):
        b = max(self.sub_traj.begin_fid, self.obj_traj.begin_fid)
        e = min(self.sub_traj.end_fid, self.obj_traj.end_fid)
        if e <= b:
            raise ValueError("subject and object trajectories do not overlap in time")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def triplet(self):
        return (self.subject, self.predicate, self.object)

    @property
    def begin_fid(self):
        return max(self.sub_traj.begin_fid, self.obj_traj.begin_fid)

    @property
    def end_fid(self):
        return min(self.sub_traj.end_fid, self.obj_traj.end_fid)


@dataclass
class VideoSample:
    video_id: str
    frame_count: int
    width: int
    height: int
    objects: list[ObjectTrack] = field(default_factory=list)
    relations: list[RelationInstance] = field(default_factory=list)
    frames: np.ndarray | None = None

    def track(self, tid: int) -> ObjectTrack:
        for o in self.objects:
            if o.tid == tid:
                return o
        raise KeyError(f"dangling track id {tid} in {self.video_id}")


@dataclass
class SegmentBatch:
    video_id: str
    start: int
    end: int
    frames: np.ndarray | None
    objects: list[ObjectTrack]
    relations: list[RelationInstance]
    width: int = 64
    height: int = 64

    @property
    def length(self):
        return self.end - self.start
