"""Deterministic moving-shapes videos with relation annotations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.rng import stream
from . import predicates
from .types import ObjectTrack, RelationInstance, Trajectory, VideoSample, Vocabulary

SHAPES = ("square", "circle", "triangle")
COLORS = {
    "red": (0.85, 0.15, 0.15),
    "green": (0.15, 0.75, 0.2),
    "blue": (0.15, 0.3, 0.9),
    "yellow": (0.9, 0.85, 0.1),
}


@dataclass
class GenConfig:
    num_videos: int = 6
    frames: int = 60
    width: int = 64
    height: int = 64
    min_objects: int = 2
    max_objects: int = 3
    num_object_categories: int = 8
    min_size: float = 12.0
    max_size: float = 22.0
    max_speed: float = 0.6
    static_prob: float = 0.2
    curve_prob: float = 0.2
    texture: float = 0.06


def category_inventory(n: int) -> list[str]:
    """First ``n`` color/shape names, cycling both lists so neighbours differ in both."""
    colors = list(COLORS)
    total = len(colors) * len(SHAPES)
    if n > total:
        raise ValueError(f"requested {n} object categories but only {total} shape/color combinations exist")
    return [f"{colors[i % len(colors)]} {SHAPES[i % len(SHAPES)]}" for i in range(n)]


def simulate_track(rng, cfg: GenConfig) -> np.ndarray:
    """Box corners (frames, 4) for one object bouncing inside the frame."""
    w = rng.uniform(cfg.min_size, cfg.max_size)
    h = rng.uniform(cfg.min_size, cfg.max_size)
    cx = rng.uniform(w / 2, cfg.width - w / 2)
    cy = rng.uniform(h / 2, cfg.height - h / 2)
    static = rng.random() < cfg.static_prob
    speed = 0.0 if static else rng.uniform(0.25 * cfg.max_speed, cfg.max_speed)
    angle = rng.uniform(0, 2 * np.pi)
    omega = rng.choice([-1, 1]) * rng.uniform(0.02, 0.06) if rng.random() < cfg.curve_prob else 0.0
    vx, vy = speed * np.cos(angle), speed * np.sin(angle)
    out = np.empty((cfg.frames, 4))
    for t in range(cfg.frames):
        out[t] = (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
        if omega:
            c, s = np.cos(omega), np.sin(omega)
            vx, vy = c * vx - s * vy, s * vx + c * vy
        cx, cy = cx + vx, cy + vy
        if cx - w / 2 < 0 or cx + w / 2 > cfg.width:
            vx = -vx
            cx = float(np.clip(cx, w / 2, cfg.width - w / 2))
        if cy - h / 2 < 0 or cy + h / 2 > cfg.height:
            vy = -vy
            cy = float(np.clip(cy, h / 2, cfg.height - h / 2))
    return out


def annotate(objects: list[ObjectTrack], width: int, height: int,
             min_len: int = predicates.MIN_RELATION_FRAMES) -> list[RelationInstance]:
    """Relation instances = maximal predicate runs for every ordered pair of tracks."""
    rels = []
    for a in objects:
        for b in objects:
            if a.tid == b.tid:
                continue
            begin = max(a.traj.begin_fid, b.traj.begin_fid)
            end = min(a.traj.end_fid, b.traj.end_fid)
            if end <= begin:
                continue
            ta, tb = a.traj.clip(begin, end), b.traj.clip(begin, end)
            truth = predicates.evaluate(ta.boxes, tb.boxes, width, height)
            for rid, name in enumerate(predicates.RELATIONS):
                for rb, re in predicates.runs(truth[name], min_len):
                    rels.append(RelationInstance(
                        a.category, rid, b.category,
                        ta.clip(begin + rb, begin + re), tb.clip(begin + rb, begin + re),
                        subject_tid=a.tid, object_tid=b.tid))
    return rels


def _shape_mask(shape, box, xs, ys):
    x0, y0, x1, y1 = box
    if shape == "square":
        return (xs >= x0) & (xs < x1) & (ys >= y0) & (ys < y1)
    if shape == "circle":
        cx, cy, rx, ry = (x0 + x1) / 2, (y0 + y1) / 2, (x1 - x0) / 2, (y1 - y0) / 2
        return ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
    # apex-up triangle inscribed in the box
    frac = (ys - y0) / (y1 - y0)
    cx, half = (x0 + x1) / 2, (x1 - x0) / 2
    return (ys >= y0) & (ys < y1) & (np.abs(xs - cx) <= half * frac)


def render(objects: list[ObjectTrack], names: list[str], frame_count: int, width: int, height: int,
           rng, texture: float = 0.06) -> np.ndarray:
    """Frames (T, H, W, 3) in [0, 1], quantized to 1/255 steps."""
    ys, xs = np.mgrid[0:height, 0:width] + 0.5
    phase = rng.uniform(0, 2 * np.pi, size=2)
    tint = rng.uniform(0.35, 0.55)
    bg = tint + texture * (np.sin(xs / 3.0 + phase[0]) * np.cos(ys / 4.0 + phase[1]))
    bg = bg + texture * 0.5 * rng.uniform(-1, 1, size=(height, width))
    base = np.repeat(bg[..., None], 3, axis=-1)
    frames = np.repeat(base[None], frame_count, axis=0)
    for obj in objects:
        color_name, shape = names[obj.category].split(" ")
        color = np.array(COLORS[color_name])
        for t in range(obj.traj.begin_fid, obj.traj.end_fid):
            mask = _shape_mask(shape, obj.traj.boxes[t - obj.traj.begin_fid], xs, ys)
            frames[t][mask] = color
    return np.round(np.clip(frames, 0, 1) * 255).astype(np.uint8).astype(np.float32) / 255.0


def generate_video(seed: int, index: int, cfg: GenConfig, names: list[str]) -> VideoSample:
    rng = stream(seed, "video", index)
    n_obj = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    cats = rng.choice(len(names), size=n_obj, replace=False)
    objects = [ObjectTrack(tid, int(c), Trajectory(0, cfg.frames, simulate_track(rng, cfg)))
               for tid, c in enumerate(cats)]
    rels = annotate(objects, cfg.width, cfg.height)
    frames = render(objects, names, cfg.frames, cfg.width, cfg.height, rng, cfg.texture)
    return VideoSample(f"synth_{seed:04d}_{index:04d}", cfg.frames, cfg.width, cfg.height,
                       objects, rels, frames)


def generate_corpus(seed: int, cfg: GenConfig) -> tuple[list[VideoSample], Vocabulary]:
    names = category_inventory(cfg.num_object_categories)
    if cfg.max_objects > len(names) or cfg.min_objects < 1 or cfg.min_objects > cfg.max_objects:
        raise ValueError("invalid objects-per-video range for the category inventory")
    vocab = Vocabulary.from_names(names, predicates.RELATIONS)
    videos = [generate_video(seed, i, cfg, names) for i in range(cfg.num_videos)]
    return videos, vocab
