"""Shared fixtures: a tiny run configuration that trains in seconds."""
import pytest

from vidrel.config import from_dict

TINY = {
    "model": {"d": 16, "heads": 2, "encoder_layers": 1, "decoder_layers": 1, "text_layers": 1,
              "n_queries": 6, "n_ctx": 2, "n_prompt": 2, "patch": 16, "top_k": 4},
    "train": {"epochs": 1, "milestones": [1], "segment_length": 10, "label_min_frames": 5},
    "eval": {"segment_length": 10},
    "data": {"num_videos": 3, "num_train": 2, "frames": 20},
}


def tiny_doc(**sections):
    doc = {k: dict(v) for k, v in TINY.items()}
    for k, v in sections.items():
        doc.setdefault(k, {}).update(v)
    return doc


@pytest.fixture
def tiny_cfg():
    return from_dict(tiny_doc())


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
