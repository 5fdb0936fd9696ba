"""Encoder, detector heads, matching, and iterative enhancement."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vidrel.core import Tensor, no_grad, precision, stream
from vidrel.model import ModelConfig, RelationDetector, run_segment
from vidrel.model import detector as D
from vidrel.model.encoder import name_embedding, patchify, split_encoder_sequence
from vidrel.model.enhance import IterativeEnhancer, SpatioTemporalBlock

SMALL = dict(d=16, heads=2, encoder_layers=1, decoder_layers=1, text_layers=1, n_queries=5, n_ctx=2,
             n_prompt=2, patch=8, image_size=16)
OBJS = ["red square", "green circle", "blue triangle"]
RELS = ["left of", "right of", "near"]


def small_model(**over):
    return RelationDetector(ModelConfig(**{**SMALL, **over}), OBJS, RELS, seed=0)


def frames(n_t=3, size=16, seed=0):
    return stream(seed, "frames").uniform(0, 1, (n_t, size, size, 3)).astype(np.float32)


# ---------------------------------------------------------------- encoder

def test_patchify_layout():
    x = np.arange(1 * 4 * 4 * 1, dtype=float).reshape(1, 4, 4, 1)
    p = patchify(x, 2)
    assert p.shape == (1, 4, 4)
    np.testing.assert_array_equal(p[0, 0], [0, 1, 4, 5])
    np.testing.assert_array_equal(p[0, 3], [10, 11, 14, 15])


def test_patchify_rejects_ragged():
    with pytest.raises(ValueError):
        patchify(np.zeros((1, 5, 4, 3)), 2)


def test_encoder_sequence_split_shapes():
    m = small_model()
    with no_grad():
        enc = m.visual(frames(), use_context=True)
    assert enc.h_cls.shape == (3, 16) and enc.h_patch.shape == (3, 4, 16)
    assert enc.c_obj.shape == (3, 2, 16) and enc.c_rel.shape == (3, 2, 16)
    assert enc.hidden.shape == (3, 1 + 4 + 4, 16)
    with no_grad():
        plain = m.visual(frames(), use_context=False)
    assert plain.c_obj is None and plain.hidden.shape == (3, 5, 16)


def test_split_rejects_wrong_length():
    with pytest.raises(ValueError):
        split_encoder_sequence(Tensor(np.zeros((1, 7, 4))), 4, 2)


def test_name_embedding_deterministic_and_word_mean():
    a = name_embedding("red square", 8)
    np.testing.assert_array_equal(a, name_embedding("red square", 8))
    np.testing.assert_allclose(a, (name_embedding("red", 8) + name_embedding("square", 8)) / 2)


def test_text_rows_unit_norm_and_subset_consistent():
    m = small_model()
    with no_grad():
        full = m.encode(frames()).text_obj.data
        sub = m.encode(frames(), obj_ids=[2, 0]).text_obj.data
    np.testing.assert_allclose(np.linalg.norm(full, axis=-1), 1.0, rtol=1e-5)
    np.testing.assert_allclose(sub, full[[2, 0]], atol=1e-6)


# ---------------------------------------------------------------- detector heads

def brute_extent(p, thr):
    best = None
    n = len(p)
    for b in range(n):
        for e in range(b + 1, n + 1):
            if all(p[t] >= thr for t in range(b, e)):
                if best is None or e - b > best[1] - best[0]:
                    best = (b, e)
    return best


def test_extent_exhaustive_length_four():
    for bits in itertools.product([0.0, 1.0], repeat=4):
        assert D.trajectory_extent(np.array(bits), 0.5) == brute_extent(bits, 0.5), bits


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=12), st.floats(0.05, 0.95))
def test_extent_matches_brute_force(p, thr):
    assert D.trajectory_extent(np.array(p), thr) == brute_extent(p, thr)


def test_extent_pool_mean():
    f = Tensor(np.arange(12, dtype=float).reshape(4, 3))
    np.testing.assert_allclose(D.extent_pool(f, 1, 3).data, [4.5, 5.5, 6.5])
    with pytest.raises(ValueError):
        D.extent_pool(f, 2, 2)


def test_form_pairs_counts_and_order():
    pairs = D.form_pairs(np.array([0.1, 0.9, 0.5, 0.7]), 3)
    assert len(pairs) == 6 and set(itertools.chain(*pairs)) == {1, 3, 2}
    assert D.form_pairs(np.array([0.5]), 3) == []


def test_box_conversions_round_trip():
    b = np.array([[0.5, 0.4, 0.2, 0.3]])
    np.testing.assert_allclose(D.corners_to_center(D.center_to_corners(b)), b)
    np.testing.assert_allclose(D.to_pixel_boxes(b, 100, 50), [[40, 12.5, 60, 27.5]])


# ---------------------------------------------------------------- matching oracle

def factorial_min(cost):
    n_gt, n_q = cost.shape
    best = None
    for perm in itertools.permutations(range(n_q), n_gt):
        total = sum(cost[g, perm[g]] for g in range(n_gt))
        best = total if best is None or total < best else best
    return best


def test_assignment_matches_factorial_enumeration():
    rng = np.random.default_rng(0)
    for trial in range(300):
        n_gt = int(rng.integers(0, 7))
        n_q = int(rng.integers(max(n_gt, 1), 8))
        if trial % 3 == 0:
            cost = rng.integers(0, 4, (n_gt, n_q)).astype(float)     # many ties
        else:
            n_t = 4
            scores = rng.uniform(size=(n_q, 3))
            boxes = rng.uniform(size=(n_q, n_t, 4))
            gt_boxes = rng.uniform(size=(n_gt, n_t, 4))
            masks = rng.uniform(size=(n_gt, n_t)) < 0.7
            masks[:, 0] = True
            cost = D.assignment_cost(scores, boxes, rng.integers(0, 3, n_gt), gt_boxes, masks)
        got = D.assign_targets(cost)
        assert sorted(got) == list(range(n_gt)) and len(set(got.values())) == n_gt
        total = sum(cost[g, got[g]] for g in range(n_gt))
        assert total == (factorial_min(cost) if n_gt else 0)


def test_assignment_rejects_too_many_tracks():
    with pytest.raises(ValueError):
        D.assign_targets(np.zeros((3, 2)))


def test_assignment_cost_example():
    scores = np.array([[0.9, 0.1], [0.2, 0.8]])
    boxes = np.zeros((2, 2, 4))
    boxes[1] += 0.1
    gt = np.zeros((1, 2, 4))
    cost = D.assignment_cost(scores, boxes, [1], gt, np.array([[True, False]]))
    np.testing.assert_allclose(cost, [[1 - 0.1, (1 - 0.8) + 5 * 0.4]])


# ---------------------------------------------------------------- enhancement

def _entities(seed=0, p=2, t=3, d=8):
    r = stream(seed, "entities")
    return (Tensor(r.normal(size=(p, t, d))), Tensor(r.normal(size=(p, t, d))), Tensor(r.normal(size=(t, d))))


@pytest.mark.parametrize("n_iters", [1, 2, 3])
def test_alpha_one_leaves_entities_bit_exact(n_iters):
    s, o, c = _entities()
    enh = IterativeEnhancer(8, 2, n_iters, 1.0, stream(0, "init"))(s, o, c)
    np.testing.assert_array_equal(enh.subj.data, s.data)
    np.testing.assert_array_equal(enh.obj.data, o.data)
    assert len(enh.history) == n_iters


@pytest.mark.parametrize("n_iters", [1, 2, 3])
def test_alpha_zero_equal_subject_object(n_iters):
    s, o, c = _entities()
    enh = IterativeEnhancer(8, 2, n_iters, 0.0, stream(0, "init"))(s, o, c)
    np.testing.assert_array_equal(enh.subj.data, enh.obj.data)


def test_zero_iterations_identity():
    s, o, c = _entities()
    enh = IterativeEnhancer(8, 2, 0, 0.5, stream(0, "init"))(s, o, c)
    assert enh.subj is s and enh.obj is o
    assert enh.relation.shape == (2, 3, 8)


def test_intermediate_alpha_mixes():
    s, o, c = _entities()
    enh = IterativeEnhancer(8, 2, 1, 0.5, stream(0, "init"))(s, o, c)
    assert not np.array_equal(enh.subj.data, s.data)
    assert not np.array_equal(enh.subj.data, enh.obj.data)


def test_relation_feature_depends_on_order():
    s, o, c = _entities()
    block = SpatioTemporalBlock(8, 2, stream(0, "init"))
    assert not np.allclose(block(s, o, c).data, block(o, s, c).data)


def test_block_rejects_frame_mismatch():
    s, o, c = _entities()
    with pytest.raises(ValueError):
        SpatioTemporalBlock(8, 2, stream(0, "init"))(s, o, Tensor(np.zeros((4, 8))))


def test_alpha_out_of_range():
    with pytest.raises(ValueError):
        ModelConfig(alpha=1.5).validate()


# ---------------------------------------------------------------- full segment

def test_run_segment_shapes_and_ranges():
    m = small_model(presence_threshold=0.01, score_threshold=0.01, min_extent=1)
    with no_grad():
        out = run_segment(m, frames())
    assert len(out.candidates) >= 2 and len(out.pairs) == len(out.pair_extents)
    p = len(out.pairs)
    assert out.relation_scores.shape == (p, 3) and out.subject_scores.shape == (p, 3)
    assert out.subject_boxes.shape == (p, 3, 4)
    assert np.all((out.relation_scores >= 0) & (out.relation_scores <= 1))
    for b, e in out.pair_extents:
        assert 0 <= b < e <= 3


def test_run_segment_deterministic():
    with no_grad():
        a = run_segment(small_model(presence_threshold=0.01, score_threshold=0.01, min_extent=1), frames())
        b = run_segment(small_model(presence_threshold=0.01, score_threshold=0.01, min_extent=1), frames())
    np.testing.assert_array_equal(a.relation_scores, b.relation_scores)


def test_no_context_variant_runs():
    m = small_model(context_encoding=False, presence_threshold=0.01, score_threshold=0.01, min_extent=1)
    with no_grad():
        ctx = m.encode(frames())
        out = run_segment(m, frames())
    assert ctx.enc.c_obj is None and out.relation_scores.shape[1] == 3


def test_model_gradients_flow_in_float64():
    m = small_model()
    with precision(np.float64):
        m64 = small_model()
        ctx = m64.encode(frames().astype(np.float64))
        dec = m64.decode(ctx)
        dec.features.sum().backward()
    assert m64.queries.grad is not None and np.any(m64.queries.grad != 0)
    assert m.queries.data.dtype == np.float32
