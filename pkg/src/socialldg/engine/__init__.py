"""Float64 tensors with reverse-mode differentiation, layers, optimizer and checkpoints."""

from . import tensor as F
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import grad_check, numerical_grad
from .nn import LayerNorm, Linear, MLP, Module, MultiHeadAttention, Parameter, TransformerBlock
from .optim import AdamW, LrSchedule
from .tensor import ContractError, NonFiniteError, ShapeError, Tensor, no_grad

__all__ = [
    "F",
    "AdamW",
    "Checkpoint",
    "CheckpointError",
    "ContractError",
    "LayerNorm",
    "Linear",
    "LrSchedule",
    "MLP",
    "Module",
    "MultiHeadAttention",
    "NonFiniteError",
    "Parameter",
    "ShapeError",
    "Tensor",
    "TransformerBlock",
    "grad_check",
    "load_checkpoint",
    "no_grad",
    "numerical_grad",
    "save_checkpoint",
]
