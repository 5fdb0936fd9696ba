"""Named experiment recipes shared by scripts/ and the acceptance suite."""
from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

from .config import RunConfig, from_dict
from .data.splits import split_vocabulary, training_view
from .data.synth import GenConfig, generate_corpus
from .inference import EvalConfig, evaluate_model
from .model.network import ModelConfig, RelationDetector
from .training import TrainConfig, train

# Module on/off grid (context encoding x iterative enhancement) and iteration counts.
MODULE_ABLATIONS = {
    "baseline": {"context_encoding": False, "n_iters": 0},
    "enc": {"context_encoding": True, "n_iters": 0},
    "itr": {"context_encoding": False, "n_iters": 2},
    "enc+itr": {"context_encoding": True, "n_iters": 2},
}
ITERATION_ABLATIONS = {f"iters={n}": {"n_iters": n} for n in range(4)}
# Finer switches inside context encoding.
CONTEXT_ABLATIONS = {
    "w/o query refinement": {"refine_queries": False},
    "w/o text refinement": {"refine_text": False},
    "w/o context encoding": {"context_encoding": False},
}


def ablation_configs(base: RunConfig, which: str = "all") -> dict[str, RunConfig]:
    groups = {"modules": MODULE_ABLATIONS, "iterations": ITERATION_ABLATIONS, "context": CONTEXT_ABLATIONS}
    chosen = groups if which == "all" else {which: groups[which]}
    out = {}
    for group in chosen.values():
        for name, over in group.items():
            doc = copy.deepcopy(base.to_dict())
            doc["model"].update(over)
            out[name] = from_dict(doc)
    return out


# --- overfit regression ---------------------------------------------------------

OVERFIT_VIDEOS = 4
OVERFIT_EPOCHS = 300          # 1200 single-video steps
OVERFIT_MILESTONE = 240


@dataclass
class OverfitResult:
    initial_loss: float
    loss_at_200: float
    final_report: dict
    cpu_seconds: float
    steps: int
    losses: list[float] = field(default_factory=list)


def overfit_corpus(seed: int = 0):
    """The fixed 4-video corpus (default generator settings) with its base/novel split."""
    videos, vocab = generate_corpus(seed, GenConfig(num_videos=OVERFIT_VIDEOS))
    vocab = split_vocabulary(vocab, videos, 0.25, 0.25)
    return [training_view(v, vocab) for v in videos], vocab


def run_overfit(seed: int = 0, epochs: int = OVERFIT_EPOCHS, progress=None) -> OverfitResult:
    """Train the default desk model on the overfit corpus; report training-set metrics (base split)."""
    t0 = time.process_time()
    views, vocab = overfit_corpus(seed)
    model = RelationDetector(ModelConfig(), vocab.object_names, vocab.relation_names, seed=seed)
    tcfg = TrainConfig(epochs=epochs, milestones=(min(OVERFIT_MILESTONE, epochs),), seed=seed)
    result = train(model, views, vocab, tcfg, progress=progress)
    report = evaluate_model(model, views, vocab, EvalConfig(split="base")).to_dict()
    losses = [r["total"] for r in result.records]
    return OverfitResult(losses[0], losses[min(199, len(losses) - 1)], report,
                         time.process_time() - t0, result.steps, losses)
