"""Query decoding, box/presence heads, entity classification, pair formation, target assignment."""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..core import tensor as T
from ..core.nn import DecoderLayer, MLP, Module, cosine_matrix
from ..core.tensor import Tensor

PRESENCE_THRESHOLD = 0.35
SCORE_THRESHOLD = 0.2


class ObjectDecoder(Module):
    """Per-frame decoder: the same layers run on every frame's query set."""

    def __init__(self, d: int, heads: int, layers: int, rng):
        self.layers = [DecoderLayer(d, heads, rng) for _ in range(layers)]

    def forward(self, queries: Tensor, h_patch: Tensor) -> Tensor:
        """(T, N_q, d), (T, N_p, d) -> O: (N_q, T, d)."""
        if queries.shape[0] != h_patch.shape[0] or queries.shape[-1] != h_patch.shape[-1]:
            raise ValueError(f"query/patch shapes disagree: {queries.shape} vs {h_patch.shape}")
        x = queries
        for layer in self.layers:
            x = layer(x, h_patch)
        return T.swapaxes(x, 0, 1)


class BoxHead(Module):
    """MLP -> 4 sigmoid box coordinates (cx, cy, w, h) and one presence logit per frame."""

    def __init__(self, d: int, rng):
        self.mlp = MLP(d, d, 5, rng)

    def forward(self, features: Tensor) -> tuple[Tensor, Tensor]:
        out = self.mlp(features)
        return T.sigmoid(out[..., :4]), out[..., 4]


def trajectory_extent(presence: np.ndarray, thresh: float = PRESENCE_THRESHOLD) -> tuple[int, int] | None:
    """Longest run of frames with presence >= thresh (earliest on ties), half-open; None if empty."""
    best, start = None, None
    mask = np.asarray(presence) >= thresh
    for t, on in enumerate(list(mask) + [False]):
        if on and start is None:
            start = t
        elif not on and start is not None:
            if best is None or t - start > best[1] - best[0]:
                best = (start, t)
            start = None
    return best


def extent_pool(features: Tensor, begin: int, end: int) -> Tensor:
    """Mean over frames [begin, end) of a (T, d) feature track."""
    if end <= begin:
        raise ValueError("zero-length pooling window")
    return features[begin:end].mean(axis=0)


def class_logits(pooled: Tensor, text: Tensor, scale: Tensor) -> Tensor:
    """gamma * cos(pooled rows, text rows): (n, d), (C, d) -> (n, C)."""
    return cosine_matrix(pooled, text) * scale


def classify_entities(pooled: Tensor, text: Tensor, scale: Tensor) -> Tensor:
    """Sigmoid scores in [0, 1] per candidate and category."""
    return T.sigmoid(class_logits(pooled, text, scale))


def form_pairs(scores: np.ndarray, k: int) -> list[tuple[int, int]]:
    """Ordered pairs among the top-k candidates (score desc, index asc)."""
    scores = np.asarray(scores, dtype=np.float64)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:k]
    if len(order) < 2:
        return []
    return [(a, b) for a, b in itertools.permutations(order, 2)]


def assignment_cost(class_scores: np.ndarray, boxes: np.ndarray, gt_classes, gt_boxes, gt_masks,
                    w_cls: float = 1.0, w_box: float = 5.0) -> np.ndarray:
    """Cost (n_gt, n_q): w_cls * (1 - S[q, class]) + w_box * mean L1 over the GT extent.

    class_scores: (N_q, C); boxes: (N_q, T, 4); gt_boxes: (n_gt, T, 4); gt_masks: (n_gt, T) bool.
    """
    n_gt = len(gt_classes)
    cost = np.zeros((n_gt, len(class_scores)))
    for g in range(n_gt):
        m = gt_masks[g]
        l1 = np.abs(boxes[:, m] - gt_boxes[g][m][None]).sum(-1).mean(-1)
        cost[g] = w_cls * (1.0 - class_scores[:, gt_classes[g]]) + w_box * l1
    return cost


def assign_targets(cost: np.ndarray) -> dict[int, int]:
    """Optimal injective GT -> query assignment for a (n_gt, n_q) cost matrix."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a matrix")
    n_gt, n_q = cost.shape
    if n_gt > n_q:
        raise ValueError(f"{n_gt} ground-truth tracks but only {n_q} queries")
    if n_gt == 0:
        return {}
    rows, cols = linear_sum_assignment(cost)
    return {int(r): int(c) for r, c in zip(rows, cols)}


def center_to_corners(b: np.ndarray) -> np.ndarray:
    cx, cy, w, h = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], -1)


def corners_to_center(b: np.ndarray) -> np.ndarray:
    x0, y0, x1, y1 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0], -1)


def to_pixel_boxes(norm_center: np.ndarray, width: int, height: int) -> np.ndarray:
    """Normalized (cx, cy, w, h) -> pixel corners clipped to the frame."""
    c = np.clip(center_to_corners(np.asarray(norm_center, dtype=np.float64)), 0.0, 1.0)
    return c * np.array([width, height, width, height], dtype=np.float64)
