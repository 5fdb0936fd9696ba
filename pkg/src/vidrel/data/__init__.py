from .types import (
    BBox, Category, ObjectTrack, RelationInstance, SegmentBatch, Trajectory, VideoSample, Vocabulary,
)
from .synth import GenConfig, generate_corpus
from .splits import split_vocabulary, training_view
from .segments import segmentize
from .annotations import AnnotationError, load_annotations, load_corpus, save_annotations, save_corpus

__all__ = [
    "BBox", "Category", "ObjectTrack", "RelationInstance", "SegmentBatch", "Trajectory",
    "VideoSample", "Vocabulary", "GenConfig", "generate_corpus", "split_vocabulary",
    "training_view", "segmentize", "AnnotationError", "load_annotations", "load_corpus",
    "save_annotations", "save_corpus",
]
