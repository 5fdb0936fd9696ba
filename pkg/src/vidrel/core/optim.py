"""AdamW with a milestone (multi-step) learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import NonFiniteError


def multistep_lr(base_lr: float, epoch: int, milestones, factor: float = 0.1) -> float:
    """Rate for a 0-based epoch: decayed once for every milestone <= epoch."""
    passed = sum(1 for m in milestones if epoch >= m)
    return base_lr * factor ** passed


@dataclass
class OptimizerState:
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    milestones: tuple[int, ...] = ()
    factor: float = 0.1
    step: int = 0
    base_lr: float | None = None
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.base_lr is None:
            self.base_lr = self.lr


class AdamW:
    def __init__(self, named_params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.0, milestones=(), factor=0.1):
        self.params = list(named_params)
        if list(milestones) != sorted(milestones):
            raise ValueError("milestones must be ascending")
        self.state = OptimizerState(lr=lr, betas=tuple(betas), eps=eps, weight_decay=weight_decay,
                                    milestones=tuple(milestones), factor=factor)
        for name, p in self.params:
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def set_epoch(self, epoch: int):
        st = self.state
        st.lr = multistep_lr(st.base_lr, epoch, st.milestones, st.factor)

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def step(self):
        st = self.state
        for name, p in self.params:
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise NonFiniteError(f"non-finite gradient for {name}; step aborted")
        st.step += 1
        b1, b2 = st.betas
        c1 = 1 - b1 ** st.step
        c2 = 1 - b2 ** st.step
        for name, p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = st.m[name] = b1 * st.m[name] + (1 - b1) * g
            v = st.v[name] = b2 * st.v[name] + (1 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + st.eps)
            p.data = (p.data * (1 - st.lr * st.weight_decay) - st.lr * update).astype(p.data.dtype)
