from .tensor import (
    NonFiniteError, Tape, Tensor, as_tensor, backward, get_tape, no_grad, precision,
)
from .nn import Linear, LayerNorm, MLP, Module, MultiHeadAttention, Parameter, cosine_similarity
from .optim import AdamW, OptimizerState, multistep_lr
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .rng import stream

__all__ = [
    "NonFiniteError", "Tape", "Tensor", "as_tensor", "backward", "get_tape", "no_grad",
    "precision", "Linear", "LayerNorm", "MLP", "Module", "MultiHeadAttention", "Parameter",
    "cosine_similarity", "AdamW", "OptimizerState", "multistep_lr", "CheckpointError",
    "load_checkpoint", "save_checkpoint", "stream",
]
