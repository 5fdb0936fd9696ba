"""Training objective: relation/object contrastive terms, trajectory terms, contextual terms.

All inputs are restricted to base categories by the caller; the functions here
never see novel-category columns.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import tensor as T
from .core.nn import cosine_matrix
from .core.tensor import NonFiniteError, Tensor

EPS = 1e-7


def bce_sum(prob: Tensor, target: np.ndarray, axis=-1) -> Tensor:
    """Binary cross-entropy summed over ``axis``; probabilities clamped to [EPS, 1 - EPS]."""
    p = T.clip(prob, EPS, 1.0 - EPS)
    target = np.asarray(target, dtype=np.float64)
    return -(T.log(p) * target + T.log(1.0 - p) * (1.0 - target)).sum(axis=axis)


def rel_contrastive_loss(scores: Tensor, targets: np.ndarray) -> Tensor:
    """(1/|C_b|) * BCE summed over base relation columns, averaged over pairs.

    scores: (P, C_b) sigmoid probabilities; targets: (P, C_b) multi-hot.
    """
    n_pairs, n_cls = scores.shape
    if n_pairs == 0:
        return Tensor(0.0)
    return bce_sum(scores, targets).mean() * (1.0 / n_cls)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy of (n, C) logits against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if np.any(labels < 0) or np.any(labels >= c):
        raise ValueError(f"label outside the {c} training categories: {labels}")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    return -(T.log_softmax(logits, axis=-1) * onehot).sum(axis=-1).mean()


def obj_contrastive_loss(logits_s: Tensor, logits_o: Tensor, labels_s, labels_o) -> Tensor:
    """CE(subject) + CE(object), each averaged over pairs."""
    if logits_s.shape[0] == 0:
        return Tensor(0.0)
    return cross_entropy(logits_s, labels_s) + cross_entropy(logits_o, labels_o)


def trajectory_loss(pred: Tensor, gt: np.ndarray, mask: np.ndarray) -> tuple[Tensor, Tensor]:
    """Box regression and temporal-consistency terms.

    pred, gt: (P, E, T, 4) normalized boxes for P pairs and E entities;
    mask: (P, T) frames of each pair's GT extent (contiguous).
    box = mean_p (1/T_p) sum_t sum_e mean_coord SL1(pred - gt)
    cst = mean_p (1/(T_p - 1)) sum_t sum_e |pred(t+1) - pred(t)|_1   (0 when T_p = 1)
    """
    mask = np.asarray(mask, dtype=bool)
    n_pairs = pred.shape[0]
    if n_pairs == 0:
        return Tensor(0.0), Tensor(0.0)
    lengths = mask.sum(-1).astype(np.float64)
    if np.any(lengths == 0):
        raise ValueError("pair with an empty ground-truth extent")
    w_box = mask / lengths[:, None]
    sl1 = T.smooth_l1(pred - np.asarray(gt), 1.0).mean(axis=-1).sum(axis=1)  # (P, T)
    box = (sl1 * w_box).sum() * (1.0 / n_pairs)
    pair_mask = mask[:, 1:] & mask[:, :-1]
    denom = np.where(lengths > 1, lengths - 1, 1.0)
    w_cst = pair_mask / denom[:, None]
    diff = T.absolute(pred[:, :, 1:] - pred[:, :, :-1]).sum(axis=-1).sum(axis=1)  # (P, T-1)
    cst = (diff * w_cst).sum() * (1.0 / n_pairs)
    return box, cst


def context_scores(context: Tensor, text: Tensor, scale: Tensor) -> Tensor:
    """sigma(gamma * cos(token-pooled context per frame, text rows)): (T, C)."""
    return T.sigmoid(cosine_matrix(context.mean(axis=1), text) * scale)


def contextual_losses(c_obj: Tensor, c_rel: Tensor, t_obj: Tensor, t_rel: Tensor,
                      presence_obj: np.ndarray, presence_rel: np.ndarray,
                      scale_obj: Tensor, scale_rel: Tensor) -> tuple[Tensor, Tensor]:
    """Per-frame BCE (summed over categories) between context scores and category presence,
    averaged over frames. Returns (obj_ctx, rel_ctx)."""
    obj = bce_sum(context_scores(c_obj, t_obj, scale_obj), presence_obj).mean()
    rel = bce_sum(context_scores(c_rel, t_rel, scale_rel), presence_rel).mean()
    return obj, rel


@dataclass
class LossWeights:
    traj: float = 1.0
    ctx: float = 0.2
    cst: float = 0.1
    det: float = 1.0


@dataclass
class LossBreakdown:
    rel_ctr: Tensor
    obj_ctr: Tensor
    box: Tensor
    cst: Tensor
    rel_ctx: Tensor
    obj_ctx: Tensor
    det: Tensor
    total: Tensor
    weights: LossWeights

    def values(self) -> dict[str, float]:
        names = ("rel_ctr", "obj_ctr", "box", "cst", "rel_ctx", "obj_ctx", "det", "total")
        return {n: float(getattr(self, n).data) for n in names}


COMPONENTS = ("rel_ctr", "obj_ctr", "box", "cst", "rel_ctx", "obj_ctx", "det")


def total_loss(rel_ctr, obj_ctr, box, cst, rel_ctx, obj_ctx, det=None,
               weights: LossWeights | None = None) -> LossBreakdown:
    """rel_ctr + obj_ctr + w_traj (box + w_cst cst) + w_ctx (rel_ctx + obj_ctx) + w_det det.

    ``det`` is the query-level detection term (see README); passing None or w_det = 0
    leaves exactly the five-term objective.
    """
    w = weights or LossWeights()
    parts = dict(rel_ctr=rel_ctr, obj_ctr=obj_ctr, box=box, cst=cst, rel_ctx=rel_ctx, obj_ctx=obj_ctx,
                 det=det if det is not None else Tensor(0.0))
    parts = {k: T.as_tensor(v) for k, v in parts.items()}
    for name, v in parts.items():
        if not np.all(np.isfinite(v.data)):
            raise NonFiniteError(f"loss component {name} is not finite")
    total = (parts["rel_ctr"] + parts["obj_ctr"]
             + (parts["box"] + parts["cst"] * w.cst) * w.traj
             + (parts["rel_ctx"] + parts["obj_ctx"]) * w.ctx)
    if w.det:
        total = total + parts["det"] * w.det
    return LossBreakdown(total=total, weights=w, **parts)
