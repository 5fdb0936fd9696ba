"""Geometric / motion predicates used to annotate synthetic scenes.

All quantities are on normalized box centers (divide by frame width/height).
Velocities are central differences (one-sided at the ends), in normalized
units per frame.
"""
from __future__ import annotations

import numpy as np

RELATIONS = (
    "left-of", "right-of", "above", "below", "near", "larger-than", "smaller-than",
    "faster-than", "slower-than", "moving-toward", "moving-away", "following",
)

SIDE_MARGIN = 0.15          # center offset for left-of / right-of / above / below
NEAR_FRACTION = 0.25        # near: center distance < NEAR_FRACTION * frame diagonal
AREA_RATIO = 1.4            # larger-than: area ratio above this
SPEED_MARGIN = 0.004        # faster-than: speed difference above this
APPROACH_SPEED = 0.004      # moving-toward/away: |velocity component along the line|
FOLLOW_MIN_SPEED = 0.003
FOLLOW_COS = 0.8
FOLLOW_MAX_DIST = 0.5
MIN_RELATION_FRAMES = 20    # shorter runs are not annotated


def centers(boxes, width, height):
    b = np.asarray(boxes, dtype=np.float64)
    return np.stack([(b[:, 0] + b[:, 2]) / (2 * width), (b[:, 1] + b[:, 3]) / (2 * height)], -1)


def areas(boxes, width, height):
    b = np.asarray(boxes, dtype=np.float64)
    return (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1]) / (width * height)


def velocities(c):
    if len(c) < 2:
        return np.zeros_like(c)
    return np.gradient(c, axis=0)


def evaluate(boxes_a, boxes_b, width, height) -> dict[str, np.ndarray]:
    """Per-frame truth of every predicate for the ordered pair (a, b)."""
    ca, cb = centers(boxes_a, width, height), centers(boxes_b, width, height)
    aa, ab = areas(boxes_a, width, height), areas(boxes_b, width, height)
    va, vb = velocities(ca), velocities(cb)
    sa, sb = np.linalg.norm(va, axis=1), np.linalg.norm(vb, axis=1)
    diff = cb - ca
    dist = np.linalg.norm(diff, axis=1)
    unit = diff / np.maximum(dist, 1e-9)[:, None]
    approach = (va * unit).sum(1)
    cosv = (va * vb).sum(1) / np.maximum(sa * sb, 1e-12)
    ahead = (diff * vb).sum(1) > 0
    return {
        "left-of": diff[:, 0] > SIDE_MARGIN,
        "right-of": -diff[:, 0] > SIDE_MARGIN,
        "above": diff[:, 1] > SIDE_MARGIN,
        "below": -diff[:, 1] > SIDE_MARGIN,
        "near": dist < NEAR_FRACTION * np.sqrt(2.0),
        "larger-than": aa > AREA_RATIO * ab,
        "smaller-than": ab > AREA_RATIO * aa,
        "faster-than": sa > sb + SPEED_MARGIN,
        "slower-than": sb > sa + SPEED_MARGIN,
        "moving-toward": approach > APPROACH_SPEED,
        "moving-away": approach < -APPROACH_SPEED,
        "following": ((sa > FOLLOW_MIN_SPEED) & (sb > FOLLOW_MIN_SPEED) & (cosv > FOLLOW_COS)
                      & ahead & (dist < FOLLOW_MAX_DIST)),
    }


def runs(mask, min_len: int = 1):
    """Maximal runs of True as half-open (begin, end) pairs."""
    mask = np.asarray(mask, dtype=bool)
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return [(int(b), int(e)) for b, e in zip(edges[::2], edges[1::2]) if e - b >= min_len]
