"""Acceptance suite: the eleven release criteria, each at its stated tolerance.

Every test prints one ``[criterion N] PASS/FAIL`` line (also repeated in the
terminal summary). Criterion 8 trains the default desk model for ~1200 steps
and dominates the runtime (~8 CPU minutes).
"""
import copy
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from vidrel.config import from_dict
from vidrel.core import Tensor, no_grad, precision, stream
from vidrel.data import GenConfig, generate_corpus, load_corpus, segmentize, split_vocabulary, training_view
from vidrel.evaluation import (
    ObjectPrediction, average_precision, categorize_errors, evaluate, greedy_associate, recall_at_k,
    relation_detection_map, trajectory_map, viou,
)
from vidrel.experiments import MODULE_ABLATIONS, ITERATION_ABLATIONS, run_overfit
from vidrel.losses import LossWeights, contextual_losses, obj_contrastive_loss, rel_contrastive_loss, total_loss, trajectory_loss
from vidrel.model import ModelConfig, RelationDetector, run_segment
from vidrel.model import detector as D
from vidrel.model.enhance import IterativeEnhancer
from vidrel.pipeline import build_model, gen_data, run_eval, run_train
from vidrel.training import TrainConfig, segment_loss, train

import test_evaluation as TE
import test_losses as TL
import test_model as TM
from conftest import tiny_doc
from oracles import rel_error

GOLDEN = Path(__file__).parent / "golden"
RESULTS = []


def report(n, title, ok, detail=""):
    line = f"[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    RESULTS.append(line)
    print("\n" + line, flush=True)
    assert ok, line


# ---------------------------------------------------------------- 1. gradient oracle

def _toy_segment():
    """A frozen 2-frame segment with labelled relations."""
    videos, vocab = generate_corpus(0, GenConfig(num_videos=2, frames=30))
    vocab = split_vocabulary(vocab, videos, 0.25, 0.25)
    for v in videos:
        for b in segmentize(training_view(v, vocab), 2):
            if len(b.relations) >= 2 and len(b.objects) >= 2:
                return b, vocab
    raise AssertionError("no toy segment with relations")


def _sampled_gradcheck(loss_fn, params, rng, per_param=3, eps=1e-5):
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic, numeric = [], []
    with no_grad():
        for p in params:
            flat = p.data.reshape(-1)
            g = np.zeros(p.data.shape) if p.grad is None else p.grad
            for i in rng.choice(flat.size, size=min(per_param, flat.size), replace=False):
                old = flat[i]
                flat[i] = old + eps
                hi = float(loss_fn().data)
                flat[i] = old - eps
                lo = float(loss_fn().data)
                flat[i] = old
                analytic.append(g.reshape(-1)[i])
                numeric.append((hi - lo) / (2 * eps))
    assert np.count_nonzero(analytic) > len(analytic) // 2     # non-vacuous
    return rel_error(analytic, numeric), len(analytic)


def test_criterion_01_gradient_oracle():
    t0 = time.process_time()
    import test_core as TC
    worst, checked = 0.0, 0
    with precision(np.float64):
        from oracles import check_tensors
        for name, fn in TC.UNARY.items():
            rng = stream(11, name)
            x = Tensor(rng.uniform(-1, 1, size=(3, 4)), requires_grad=True)
            w = rng.normal(size=fn(Tensor(x.data)).shape)
            worst = max(worst, check_tensors(lambda: (fn(x) * w).sum(), [x]))
            checked += 1
        for name, fn in TC.BINARY.items():
            rng = stream(12, name)
            a = Tensor(rng.uniform(-1, 1, size=(3, 4)), requires_grad=True)
            b = Tensor(rng.uniform(-1, 1, size=(3, 4)), requires_grad=True)
            w = rng.normal(size=fn(Tensor(a.data), Tensor(b.data)).shape)
            worst = max(worst, check_tensors(lambda: (fn(a, b) * w).sum(), [a, b]))
            checked += 1
        batch, vocab = _toy_segment()
        batch.frames = batch.frames.astype(np.float64)
        cfg = ModelConfig(d=8, heads=2, encoder_layers=1, decoder_layers=1, text_layers=1, n_queries=4,
                          n_ctx=2, n_prompt=2, patch=16, top_k=4)
        model = RelationDetector(cfg, vocab.object_names, vocab.relation_names, seed=0)
        params = [p for _, p in model.trainable_parameters()]
        rng = stream(1, "gradcheck")
        for w_det in (0.0, 1.0):     # the five-term objective alone, then with the detection term
            tcfg = TrainConfig(label_min_frames=1, segment_length=2, w_det=w_det)
            sl = segment_loss(model, batch, vocab, tcfg)
            assert sl.n_pairs > 0 and float(sl.breakdown.rel_ctr.data) > 0
            err, n = _sampled_gradcheck(lambda: segment_loss(model, batch, vocab, tcfg).breakdown.total, params, rng)
            worst = max(worst, err)
            checked += n
    elapsed = time.process_time() - t0
    report(1, "gradient oracle", worst <= 1e-5 and elapsed < 120,
           f"max rel err {worst:.2e} over {checked} checks, {elapsed:.0f}s CPU")


# ---------------------------------------------------------------- 2. enhancement endpoints

def test_criterion_02_enhancement_endpoints():
    ok = True
    for n in (1, 2, 3):
        s, o, c = TM._entities(seed=n)
        one = IterativeEnhancer(8, 2, n, 1.0, stream(n, "init"))(s, o, c)
        zero = IterativeEnhancer(8, 2, n, 0.0, stream(n, "init"))(s, o, c)
        ok &= np.array_equal(one.subj.data, s.data) and np.array_equal(one.obj.data, o.data)
        ok &= np.array_equal(zero.subj.data, zero.obj.data)
    # and inside the full detector
    m = TM.small_model(alpha=1.0, presence_threshold=0.01, score_threshold=0.01, min_extent=1)
    with no_grad():
        out = run_segment(m, TM.frames())
    subj = np.array([p[0] for p in out.pairs])
    ok &= np.array_equal(out.enhanced.subj.data, out.decoded.features.data[subj])
    report(2, "enhancement endpoints (alpha=1 identity, alpha=0 equality)", bool(ok), "N_i in {1,2,3}")


# ---------------------------------------------------------------- 3. loss references

def test_criterion_03_loss_references():
    worst = 0.0
    with precision(np.float64):
        for i in range(100):
            rng = np.random.default_rng(i)
            p, c = rng.integers(1, 6), rng.integers(1, 7)
            sc = rng.uniform(0, 1, (p, c))
            tg = (rng.uniform(size=(p, c)) < 0.4).astype(float)
            worst = max(worst, abs(float(rel_contrastive_loss(Tensor(sc), tg).data) - TL.ref_rel_ctr(sc.tolist(), tg.tolist())))
            ls, lo = rng.normal(0, 4, (p, 4)), rng.normal(0, 4, (p, 4))
            ys, yo = rng.integers(0, 4, p), rng.integers(0, 4, p)
            worst = max(worst, abs(float(obj_contrastive_loss(Tensor(ls), Tensor(lo), ys, yo).data)
                                   - TL.ref_obj_ctr(ls.tolist(), lo.tolist(), ys.tolist(), yo.tolist())))
            t = rng.integers(1, 7)
            pred, gt = rng.uniform(0, 1, (p, 2, t, 4)), rng.uniform(-1, 2, (p, 2, t, 4))
            mask = np.zeros((p, t), bool)
            for j in range(p):
                b = rng.integers(0, t)
                mask[j, b:rng.integers(b + 1, t + 1)] = True
            box, cst = trajectory_loss(Tensor(pred), gt, mask)
            rb, rc = TL.ref_trajectory(pred.tolist(), gt.tolist(), mask.tolist())
            worst = max(worst, abs(float(box.data) - rb), abs(float(cst.data) - rc))
            co = rng.normal(size=(t, 2, 5))
            cr = rng.normal(size=(t, 2, 5))
            to, tr = rng.normal(size=(3, 5)), rng.normal(size=(4, 5))
            po = (rng.uniform(size=(t, 3)) < 0.5).astype(float)
            pr = (rng.uniform(size=(t, 4)) < 0.5).astype(float)
            g1, g2 = rng.uniform(1, 20, 2)
            lo_, lr_ = contextual_losses(Tensor(co), Tensor(cr), Tensor(to), Tensor(tr), po, pr, Tensor(g1), Tensor(g2))
            worst = max(worst, abs(float(lo_.data) - TL.ref_context(co.tolist(), to.tolist(), g1, po.tolist())),
                        abs(float(lr_.data) - TL.ref_context(cr.tolist(), tr.tolist(), g2, pr.tolist())))
        exact = True
        w = LossWeights()
        for i in range(100):
            parts = np.random.default_rng(500 + i).uniform(0, 10, 6)
            got = float(total_loss(*(Tensor(v) for v in parts), weights=w).total.data)
            rc_, oc, bx, cs, rx, ox = parts
            exact &= got == rc_ + oc + 1.0 * (bx + 0.1 * cs) + 0.2 * (rx + ox)
        exact &= (w.traj, w.ctx, w.cst) == (1.0, 0.2, 0.1)
    report(3, "loss references and weight composition", worst <= 1e-6 and exact,
           f"max abs diff {worst:.1e} over 100 instances x 5 terms; composition exact={exact}")


# ---------------------------------------------------------------- 4. metric oracles

def test_criterion_04_metric_oracles():
    worst = 0.0
    rng = np.random.default_rng(44)
    for _ in range(100):
        preds, gts = TE.rand_relation_instance(rng, n_preds=20)
        for got, want in ((relation_detection_map(preds, gts), TE.bf_map(preds, gts)),
                          (recall_at_k(preds, gts, 50), TE.bf_recall(preds, gts, 50)),
                          (recall_at_k(preds, gts, 5), TE.bf_recall(preds, gts, 5))):
            if (got is None) != (want is None):
                worst = np.inf
            elif got is not None:
                worst = max(worst, abs(got - want))
        for vid in gts:
            for p in preds.get(vid, []):
                for g in gts[vid]:
                    worst = max(worst, abs(viou(p.sub_traj, g.sub_traj) - TE.bf_viou(p.sub_traj, g.sub_traj)))
        ogts = {v: [TE.ObjectTrack(i, r.subject, r.sub_traj) for i, r in enumerate(g)] for v, g in gts.items()}
        opreds = {v: [ObjectPrediction(p.subject, p.score, p.sub_traj) for p in ps] for v, ps in preds.items()}
        got, want = trajectory_map(opreds, ogts), TE.bf_traj_map(opreds, ogts)
        if (got is None) != (want is None):
            worst = np.inf
        elif got is not None:
            worst = max(worst, abs(got - want))
    half = average_precision([False, True], 1) == 0.5
    report(4, "metric oracles (mAP, R@K, mAP_o, vIoU)", worst <= 1e-9 and half,
           f"max abs diff {worst:.1e} over 100 instances; hand-computed AP=0.5 exact={half}")


# ---------------------------------------------------------------- 5. association oracle

def test_criterion_05_association_oracle():
    rng = np.random.default_rng(55)
    cases = mismatches = 0
    for _ in range(400):
        segs = TE._assoc_case(rng, int(rng.integers(1, 5)), 3)
        insts, members = greedy_associate(segs, 0.5, return_members=True)
        got = {(r.triplet, tuple(m)) for r, m in zip(insts, members)}
        want = {(t, m) for t, m, _ in TE.chain_oracle(segs, 0.5)}
        mismatches += got != want
        cases += 1
    report(5, "association equals exhaustive chain enumeration", mismatches == 0,
           f"{cases} cases (<=4 segments, <=3 triplets each), {mismatches} mismatches")


# ---------------------------------------------------------------- 6. matching oracle

def test_criterion_06_matching_oracle():
    rng = np.random.default_rng(66)
    cases = bad = 0
    for n_gt in range(0, 7):
        for _ in range(30):
            n_q = int(rng.integers(max(n_gt, 1), 8))
            cost = rng.integers(0, 5, (n_gt, n_q)).astype(float) if rng.random() < 0.5 else rng.uniform(size=(n_gt, n_q))
            got = D.assign_targets(cost)
            total = sum(cost[g, got[g]] for g in range(n_gt))
            bad += total != (TM.factorial_min(cost) if n_gt else 0)
            cases += 1
    report(6, "assignment equals factorial enumeration", bad == 0, f"{cases} instances with <=6 GT tracks")


# ---------------------------------------------------------------- 7. error taxonomy

def test_criterion_07_error_partition():
    rng = np.random.default_rng(77)
    vocab = TE._vocab()
    bad = 0
    for _ in range(200):
        preds, gts = TE.rand_relation_instance(rng)
        samples = TE._samples(gts, rng)
        k = int(rng.integers(1, 25))
        oe, re_ = categorize_errors(preds, samples, k)
        fp = sum(len(h) - sum(h) for h in
                 (TE.bf_hits(sorted(preds.get(v, []), key=lambda p: -p.score)[:k], s.relations, 0.5)
                  for v, s in samples.items()))
        rep = evaluate(preds, {}, samples, vocab, "all", examine_top_k=k)
        bad += (oe + re_ != fp) or (rep.object_errors + rep.relationship_errors != rep.examined_false_positives)
    report(7, "OE + RE equals examined false positives", bad == 0, "200 randomized inputs")


# ---------------------------------------------------------------- 8. overfit regression

def test_criterion_08_overfit_regression():
    golden = json.loads((GOLDEN / "overfit.json").read_text())
    res = run_overfit(seed=0)
    r50 = res.final_report["R@50"]
    ratio = res.loss_at_200 / res.initial_loss
    ok = (r50 is not None and r50 >= golden["min_recall_50"] and ratio < golden["max_loss_ratio_at_200"]
          and res.cpu_seconds <= golden["max_cpu_seconds"])
    report(8, "overfit regression", ok,
           f"train R@50 {r50:.3f} (>= {golden['min_recall_50']}), loss@200/loss@1 {ratio:.3f} "
           f"(< {golden['max_loss_ratio_at_200']}), {res.steps} steps, {res.cpu_seconds:.0f}s CPU")


# ---------------------------------------------------------------- 9. ablation plumbing

def _well_formed(d):
    keys = {"split", "mAP", "R@50", "R@100", "mAP_o", "errors", "per_category_ap", "num_gt", "num_videos"}
    vals_ok = all(d[k] is None or 0.0 <= d[k] <= 1.0 for k in ("mAP", "R@50", "R@100", "mAP_o"))
    e = d["errors"]
    return keys <= set(d) and vals_ok and e["object_errors"] + e["relationship_errors"] == e["examined_false_positives"]


def test_criterion_09_ablation_plumbing(tmp_path):
    base = from_dict(tiny_doc())
    gen_data(base, tmp_path / "data")
    variants = {**MODULE_ABLATIONS, **ITERATION_ABLATIONS}
    ok, done = True, []
    for name, over in variants.items():
        doc = copy.deepcopy(base.to_dict())
        doc["model"].update(over)
        path = tmp_path / f"{len(done)}.yaml"
        path.write_text(yaml.safe_dump(json.loads(json.dumps(doc))))
        cfg = from_dict(yaml.safe_load(path.read_text()))        # from the config file alone
        run = tmp_path / f"run{len(done)}"
        _, result = run_train(cfg, tmp_path / "data", run, evaluate_train=False)
        for split in ("novel", "all"):
            ok &= _well_formed(run_eval(cfg, run / "model.ckpt", tmp_path / "data", split).to_dict())
        ok &= not result.aborted
        done.append(name)
    # N_i = 0: entity features equal decoder outputs bit for bit
    m = TM.small_model(n_iters=0, presence_threshold=0.01, score_threshold=0.01, min_extent=1)
    with no_grad():
        out = run_segment(m, TM.frames())
    s = np.array([p[0] for p in out.pairs])
    o = np.array([p[1] for p in out.pairs])
    ident = (np.array_equal(out.enhanced.subj.data, out.decoded.features.data[s])
             and np.array_equal(out.enhanced.obj.data, out.decoded.features.data[o]))
    report(9, "ablation plumbing", bool(ok and ident), f"{len(done)} variants ran; N_i=0 identity={ident}")


# ---------------------------------------------------------------- 10. determinism

def _full_run(root: Path, cfg_path: Path):
    cli = [sys.executable, "-m", "vidrel.cli"]
    for args in (["gen-data", "--config", str(cfg_path), "--out", str(root / "data")],
                 ["train", "--config", str(cfg_path), "--data", str(root / "data"), "--out", str(root / "run")],
                 ["eval", "--config", str(cfg_path), "--ckpt", str(root / "run" / "model.ckpt"),
                  "--data", str(root / "data"), "--split", "all", "--report", str(root / "report.json")]):
        subprocess.run(cli + args, check=True, capture_output=True)
    manifest = json.loads((root / "run" / "manifest.json").read_text())
    return (root / "report.json").read_bytes(), manifest["checkpoint_digest"], manifest["final_report"]


def test_criterion_10_determinism(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump(tiny_doc(train={"epochs": 3, "milestones": [2]})))
    a = _full_run(tmp_path / "a", cfg)
    b = _full_run(tmp_path / "b", cfg)
    report(10, "determinism (two gen->train->eval runs)", a == b,
           f"checkpoint digest {a[1][:12]}..., reports identical={a[0] == b[0]}")


# ---------------------------------------------------------------- 11. split hygiene

def _train_losses(corpus, rows_obj, rows_rel, noise):
    cfg = from_dict(tiny_doc(train={"epochs": 2, "milestones": [2]}))
    videos, vocab, _ = corpus
    model = build_model(cfg, vocab)
    r = stream(3, "perturb")
    for rows, table in ((rows_obj, model.bank.obj_names), (rows_rel, model.bank.rel_names)):
        if len(rows):
            table.data[rows] += noise * r.normal(size=table.data[rows].shape).astype(table.data.dtype)
    res = train(model, [training_view(v, vocab) for v in videos], vocab, cfg.train)
    return [{k: v for k, v in rec.items() if k not in ("video",)} for rec in res.records]


def test_criterion_11_split_hygiene(tmp_path):
    gen_data(from_dict(tiny_doc()), tmp_path / "data")
    corpus = load_corpus(tmp_path / "data", "train")
    vocab = corpus[1]
    clean = _train_losses(corpus, [], [], 0.0)
    novel = _train_losses(corpus, vocab.novel_objects(), vocab.novel_relations(), 5.0)
    base = _train_losses(corpus, vocab.base_objects()[:1], [], 5.0)     # control: must differ
    same = clean == novel
    control = clean != base
    report(11, "split hygiene (novel name embeddings never touch training)", same and control,
           f"{len(clean)} steps; identical losses under novel perturbation={same}; base perturbation changes losses={control}")
