"""End-to-end steps shared by the CLI and the experiment scripts."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, dump_config
from .core.tensor import no_grad
from .data.annotations import load_corpus, save_corpus
from .data.segments import segmentize
from .data.splits import split_vocabulary, training_view
from .data.synth import generate_corpus
from .evaluation.dump import dump_predictions
from .evaluation.metrics import EvalReport, categorize_errors, filter_split
from .inference import EvalConfig, check_vocabulary, evaluate_model, oracle_object_eval, predict_corpus
from .model.network import RelationDetector
from .training import TrainResult, load_model, match_queries, segment_targets, train

log = logging.getLogger(__name__)


def gen_data(cfg: RunConfig, out_dir) -> dict:
    """Generate, split and write a corpus; returns the manifest."""
    dc = cfg.data
    videos, vocab = generate_corpus(dc.seed, dc.gen_config())
    vocab = split_vocabulary(vocab, videos, dc.novel_fraction_obj, dc.novel_fraction_rel)
    ids = [v.video_id for v in videos]
    splits = {"train": ids[:dc.num_train], "test": ids[dc.num_train:]}
    manifest = {"seed": dc.seed, "data": asdict(dc), "code_version": __version__,
                "novel_objects": [vocab.objects[i].name for i in vocab.novel_objects()],
                "novel_relations": [vocab.relations[i].name for i in vocab.novel_relations()]}
    save_corpus(out_dir, videos, vocab, splits, manifest)
    return manifest


def build_model(cfg: RunConfig, vocab) -> RelationDetector:
    return RelationDetector(cfg.model, vocab.object_names, vocab.relation_names, seed=cfg.train.seed)


@dataclass
class RunManifest:
    config_digest: str
    seed: int
    code_version: str
    steps: int
    epoch_losses: list[dict] = field(default_factory=list)
    checkpoint_digest: str | None = None
    final_report: dict | None = None
    aborted: bool = False
    error: str | None = None


def run_train(cfg: RunConfig, data_dir, out_dir, progress=None, model: RelationDetector | None = None,
              evaluate_train: bool = True) -> tuple[RunManifest, TrainResult]:
    """Train on the corpus' training split (base categories only) and write
    ``model.ckpt``, ``train_log.jsonl``, ``config.yaml``, ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    videos, vocab, _ = load_corpus(data_dir, "train")
    views = [training_view(v, vocab) for v in videos]
    model = model or build_model(cfg, vocab)
    (out / "config.yaml").write_text(dump_config(cfg))
    result = train(model, views, vocab, cfg.train, out, progress=progress)
    report = None
    if evaluate_train and not result.aborted:
        ecfg = EvalConfig(**{**asdict(cfg.eval), "split": "base"})
        report = evaluate_model(model, views, vocab, ecfg).to_dict()
    manifest = RunManifest(cfg.digest(), cfg.train.seed, __version__, result.steps, result.epoch_losses,
                           result.digest, report, result.aborted, result.error)
    (out / "manifest.json").write_text(json.dumps(asdict(manifest), indent=1, sort_keys=True))
    return manifest, result


def _subset(data_dir, subset: str):
    return load_corpus(data_dir, None if subset == "all" else subset)


def run_eval(cfg: RunConfig, ckpt, data_dir, split: str, report_path=None, subset: str = "test",
             dump_dir=None) -> EvalReport:
    model, _, _ = load_model(ckpt)
    videos, vocab, _ = _subset(data_dir, subset)
    check_vocabulary(model, vocab)
    ecfg = EvalConfig(**{**asdict(cfg.eval), "split": split})
    preds = predict_corpus(model, videos, ecfg)
    report = evaluate_model(model, videos, vocab, ecfg, predictions=preds)
    if dump_dir is not None:
        dump_predictions(dump_dir, preds[0], preds[1], vocab)
    if report_path is not None:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        Path(report_path).write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    return report


def run_analyze(cfg: RunConfig, ckpt, data_dir, out_path=None, subset: str = "test") -> dict:
    """Object/relationship error counts on the eval split plus the GT-object relation accuracy."""
    model, _, _ = load_model(ckpt)
    videos, vocab, _ = _subset(data_dir, subset)
    check_vocabulary(model, vocab)
    ecfg = cfg.eval
    preds, _ = predict_corpus(model, videos, ecfg)
    samples = {v.video_id: v for v in videos}
    p, g = filter_split(preds, {v: s.relations for v, s in samples.items()}, vocab, ecfg.split)
    oe, re_ = categorize_errors(p, samples, ecfg.examine_top_k, ecfg.viou_threshold, relations=g)
    diag = oracle_object_eval(model, videos, vocab, cfg.train)
    out = {"split": ecfg.split, "subset": subset, "examine_top_k": ecfg.examine_top_k,
           "object_errors": oe, "relationship_errors": re_, "examined_false_positives": oe + re_,
           "gt_object_relation_accuracy": diag["relation_accuracy"], "gt_object_pairs": diag["pairs"]}
    if out_path is not None:
        Path(out_path).write_text(json.dumps(out, indent=1, sort_keys=True))
    return out


FEATURE_ARRAYS = ("pre_subject", "pre_object", "post_subject", "post_object", "relation")


def dump_features(model: RelationDetector, videos, vocab, tcfg) -> dict[str, np.ndarray]:
    """One row per GT-matched ordered pair and segment: frame-pooled features before and
    after enhancement, the relation feature, and labels."""
    obj_ids = np.arange(len(vocab.objects))
    rel_ids = np.arange(len(vocab.relations))
    rows = {k: [] for k in FEATURE_ARRAYS}
    meta = {"video_id": [], "segment_start": [], "subject_category": [], "object_category": [],
            "relations": []}
    everything = type(vocab).from_names(vocab.object_names, vocab.relation_names)
    with no_grad():
        for v in videos:
            for batch in segmentize(v, tcfg.segment_length):
                tg = segment_targets(batch, everything, tcfg.label_min_frames)
                ctx = model.encode(batch.frames, obj_ids, rel_ids)
                dec = model.decode(ctx)
                matching = match_queries(model, dec, ctx, tg, tcfg)
                pairs = [(a, b) for a in sorted(matching) for b in sorted(matching) if a != b]
                if not pairs:
                    continue
                enh = model.enhance(dec.features, [(matching[a], matching[b]) for a, b in pairs], ctx.enc.h_cls)
                f = dec.features.data
                for i, (a, b) in enumerate(pairs):
                    rows["pre_subject"].append(f[matching[a]].mean(0))
                    rows["pre_object"].append(f[matching[b]].mean(0))
                    rows["post_subject"].append(enh.subj.data[i].mean(0))
                    rows["post_object"].append(enh.obj.data[i].mean(0))
                    rows["relation"].append(enh.relation.data[i].mean(0))
                    meta["video_id"].append(v.video_id)
                    meta["segment_start"].append(batch.start)
                    meta["subject_category"].append(vocab.objects[tg.classes[a]].name)
                    meta["object_category"].append(vocab.objects[tg.classes[b]].name)
                    labels = sorted(tg.pair_labels.get((tg.tids[a], tg.tids[b]), ()))
                    meta["relations"].append(";".join(vocab.relations[c].name for c in labels))
    d = model.cfg.d
    out = {k: np.array(v, dtype=np.float64).reshape(-1, d) for k, v in rows.items()}
    out.update({k: np.array(v) for k, v in meta.items()})
    return out


def run_dump_features(cfg: RunConfig, ckpt, data_dir, out_path, subset: str = "test") -> int:
    model, _, _ = load_model(ckpt)
    videos, vocab, _ = _subset(data_dir, subset)
    check_vocabulary(model, vocab)
    table = dump_features(model, videos, vocab, cfg.train)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "wb") as fh:
        np.savez(fh, **table)
    return len(table["video_id"])


__all__ = ["gen_data", "run_train", "run_eval", "run_analyze", "run_dump_features", "dump_features",
           "RunManifest", "build_model"]
