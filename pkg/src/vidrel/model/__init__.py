from .network import ModelConfig, RelationDetector, run_segment

__all__ = ["ModelConfig", "RelationDetector", "run_segment"]
