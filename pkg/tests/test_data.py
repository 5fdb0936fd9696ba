"""Synthetic generator, predicates, annotation I/O, segmentation, base/novel split."""
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vidrel.data import (
    AnnotationError, GenConfig, generate_corpus, load_annotations, load_corpus, save_annotations,
    save_corpus, segmentize, split_vocabulary, training_view,
)
from vidrel.data import predicates as P
from vidrel.data.annotations import from_document, to_document
from vidrel.data.types import BBox, Trajectory, Vocabulary

CFG = GenConfig(num_videos=2, frames=40)


@pytest.fixture(scope="module")
def corpus():
    videos, vocab = generate_corpus(0, CFG)
    return videos, split_vocabulary(vocab, videos, 0.25, 0.25)


# ---------------------------------------------------------------- generator

def test_generator_deterministic():
    a, _ = generate_corpus(3, CFG)
    b, _ = generate_corpus(3, CFG)
    for x, y in zip(a, b):
        assert np.array_equal(x.frames, y.frames)
        assert [r.triplet for r in x.relations] == [r.triplet for r in y.relations]


def test_generator_seed_changes_output():
    a, _ = generate_corpus(0, CFG)
    b, _ = generate_corpus(1, CFG)
    assert not np.array_equal(a[0].frames, b[0].frames)


def test_generated_annotations_consistent(corpus):
    videos, _ = corpus
    for v in videos:
        assert v.frames.shape == (CFG.frames, CFG.height, CFG.width, 3)
        assert v.frames.min() >= 0 and v.frames.max() <= 1
        for o in v.objects:
            b = o.traj.boxes
            assert np.all(b[:, 0] >= 0) and np.all(b[:, 2] <= CFG.width + 1e-9)
            assert np.all(b[:, 1] >= 0) and np.all(b[:, 3] <= CFG.height + 1e-9)
        for r in v.relations:
            assert r.end_fid - r.begin_fid >= P.MIN_RELATION_FRAMES
            assert v.track(r.subject_tid).category == r.subject


def test_relation_labels_match_predicates(corpus):
    videos, _ = corpus
    for v in videos:
        for r in v.relations:
            truth = P.evaluate(v.track(r.subject_tid).traj.boxes, v.track(r.object_tid).traj.boxes, v.width, v.height)
            assert truth[P.RELATIONS[r.predicate]][r.begin_fid:r.end_fid].all()


def test_predicate_examples():
    a = np.array([[0, 0, 10, 10]] * 3, float)
    b = np.array([[40, 0, 50, 10]] * 3, float)
    t = P.evaluate(a, b, 64, 64)
    assert t["left-of"].all() and not t["right-of"].any()
    assert not t["near"].any() and not t["larger-than"].any()
    t2 = P.evaluate(b, a, 64, 64)
    assert t2["right-of"].all()


def test_runs():
    assert P.runs([1, 1, 0, 1, 1, 1, 0], 2) == [(0, 2), (3, 6)]
    assert P.runs([1, 1, 0, 1, 1, 1, 0], 3) == [(3, 6)]
    assert P.runs([], 1) == []


# ---------------------------------------------------------------- types

def test_bbox_round_trip():
    b = BBox(4, 8, 20, 30)
    assert BBox.from_normalized(*b.to_normalized(64, 64), 64, 64) == pytest.approx(b)
    with pytest.raises(ValueError):
        BBox(5, 5, 5, 10)


def test_trajectory_length_checked():
    with pytest.raises(ValueError):
        Trajectory(0, 3, np.zeros((2, 4)))


def test_trajectory_clip():
    t = Trajectory(2, 6, np.arange(16).reshape(4, 4))
    c = t.clip(3, 10)
    assert (c.begin_fid, c.end_fid) == (3, 6) and np.array_equal(c.boxes[0], [4, 5, 6, 7])
    assert t.clip(7, 9) is None


def test_vocabulary_checks():
    with pytest.raises(ValueError):
        Vocabulary.from_names(["a", "a"], ["r"])


# ---------------------------------------------------------------- annotation I/O

def test_annotation_round_trip(tmp_path, corpus):
    videos, vocab = corpus
    v = videos[0]
    save_annotations(tmp_path / "a.json", v, vocab)
    w = load_annotations(tmp_path / "a.json", vocab)
    assert [o.traj for o in w.objects] == [o.traj for o in v.objects]
    assert [(r.triplet, r.begin_fid, r.end_fid) for r in w.relations] == \
           [(r.triplet, r.begin_fid, r.end_fid) for r in v.relations]


def _doc(corpus):
    videos, vocab = corpus
    return to_document(videos[0], vocab), vocab


def test_dangling_track_rejected(corpus):
    doc, vocab = _doc(corpus)
    doc["relation_instances"].append({"subject_tid": 99, "object_tid": 0, "predicate": "near",
                                      "begin_fid": 0, "end_fid": 3})
    with pytest.raises(AnnotationError):
        from_document(doc, vocab)


def test_bad_range_rejected(corpus):
    doc, vocab = _doc(corpus)
    doc["relation_instances"].append({"subject_tid": 0, "object_tid": 1, "predicate": "near",
                                      "begin_fid": 5, "end_fid": 5})
    with pytest.raises(AnnotationError):
        from_document(doc, vocab)


def test_unknown_category_rejected(corpus):
    doc, vocab = _doc(corpus)
    doc["subject/objects"][0]["category"] = "purple hexagon"
    with pytest.raises(AnnotationError):
        from_document(doc, vocab)


def test_gappy_track_rejected(corpus):
    doc, vocab = _doc(corpus)
    doc["trajectories"][5] = [e for e in doc["trajectories"][5] if e["tid"] != 0]
    with pytest.raises(AnnotationError):
        from_document(doc, vocab)


def test_corpus_round_trip(tmp_path, corpus):
    videos, vocab = corpus
    save_corpus(tmp_path, videos, vocab, {"train": [videos[0].video_id], "test": [videos[1].video_id]}, {})
    train, v2, splits = load_corpus(tmp_path, "train")
    assert [v.video_id for v in train] == [videos[0].video_id]
    assert v2 == vocab
    assert np.array_equal(train[0].frames, videos[0].frames)   # generator frames are already 1/255 steps
    assert json.loads((tmp_path / "splits.json").read_text()) == splits


# ---------------------------------------------------------------- segments

def test_segments_cover_and_clip(corpus):
    videos, _ = corpus
    v = videos[0]
    segs = segmentize(v, 15)
    assert [(s.start, s.end) for s in segs] == [(0, 15), (15, 30)]    # trailing 10 frames dropped
    for s in segs:
        assert s.frames.shape[0] == 15
        for o in s.objects:
            assert s.start <= o.traj.begin_fid < o.traj.end_fid <= s.end
        for r in s.relations:
            assert s.start <= r.begin_fid and r.end_fid <= s.end


def test_short_video_no_segments(corpus):
    videos, _ = corpus
    assert segmentize(videos[0], 100) == []


# ---------------------------------------------------------------- split

def test_split_disjoint_and_sized(corpus):
    videos, vocab = corpus
    assert len(vocab.novel_objects()) == 2 and len(vocab.novel_relations()) == 3
    assert not set(vocab.novel_objects()) & set(vocab.base_objects())


def test_split_picks_rarest(corpus):
    videos, vocab = corpus
    counts = {c: 0 for c in range(len(vocab.relations))}
    for v in videos:
        for r in v.relations:
            counts[r.predicate] += 1
    novel = vocab.novel_relations()
    assert max(counts[c] for c in novel) <= min(counts[c] for c in vocab.base_relations())


def test_training_view_removes_novel(corpus):
    videos, vocab = corpus
    for v in videos:
        tv = training_view(v, vocab)
        assert all(o.category in vocab.base_objects() for o in tv.objects)
        assert all(r.predicate in vocab.base_relations() and r.subject in vocab.base_objects()
                   and r.object in vocab.base_objects() for r in tv.relations)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 0.8), st.floats(0, 0.8))
def test_split_fraction_property(fo, fr):
    videos, vocab = generate_corpus(0, GenConfig(num_videos=1, frames=30))
    s = split_vocabulary(vocab, videos, fo, fr)
    assert len(s.novel_objects()) == int(np.ceil(fo * len(vocab.objects)))
    assert len(s.base_relations()) >= 1


def test_split_rejects_all_novel(corpus):
    videos, vocab = corpus
    with pytest.raises(ValueError):
        split_vocabulary(vocab, videos, 1.0, 0.2)
