from .viou import box_iou, viou
from .association import SegmentPrediction, greedy_associate
from .metrics import (
    EvalReport, ObjectPrediction, average_precision, categorize_errors, evaluate, filter_split,
    match_relations, recall_at_k, relation_detection_map, top1_relation_accuracy, trajectory_map,
)
from .dump import dump_predictions, load_predictions

__all__ = [
    "box_iou", "viou", "SegmentPrediction", "greedy_associate", "EvalReport", "ObjectPrediction",
    "average_precision", "categorize_errors", "evaluate", "filter_split", "match_relations",
    "recall_at_k", "relation_detection_map", "top1_relation_accuracy", "trajectory_map",
    "dump_predictions", "load_predictions",
]
