"""Box IoU and volume IoU over trajectories (continuous pixel coordinates)."""
from __future__ import annotations

import numpy as np

from ..data.types import Trajectory


def box_iou(a, b) -> np.ndarray:
    """IoU of corner-form boxes; broadcasts over leading dims."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    iw = np.clip(np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0]), 0, None)
    ih = np.clip(np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1]), 0, None)
    inter = iw * ih
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    union = area_a + area_b - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1), 0.0)


def viou(ta: Trajectory, tb: Trajectory) -> float:
    """Summed per-frame intersection over summed per-frame union, across the temporal union.

    Frames outside a trajectory's extent contribute zero area for it.
    """
    lo, hi = min(ta.begin_fid, tb.begin_fid), max(ta.end_fid, tb.end_fid)
    ob, oe = max(ta.begin_fid, tb.begin_fid), min(ta.end_fid, tb.end_fid)
    area = lambda bx: (bx[:, 2] - bx[:, 0]) * (bx[:, 3] - bx[:, 1])  # noqa: E731
    union = area(ta.boxes).sum() + area(tb.boxes).sum()
    inter = 0.0
    if oe > ob:
        a = ta.boxes[ob - ta.begin_fid:oe - ta.begin_fid]
        b = tb.boxes[ob - tb.begin_fid:oe - tb.begin_fid]
        iw = np.clip(np.minimum(a[:, 2], b[:, 2]) - np.maximum(a[:, 0], b[:, 0]), 0, None)
        ih = np.clip(np.minimum(a[:, 3], b[:, 3]) - np.maximum(a[:, 1], b[:, 1]), 0, None)
        inter = float((iw * ih).sum())
    union -= inter
    if union <= 0 or hi <= lo:
        return 0.0
    return float(min(1.0, inter / union))
