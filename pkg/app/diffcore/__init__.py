"""Tape-based reverse-mode differentiation, MLPs and Adam."""

from app.diffcore.gradcheck import finite_diff_grad, relative_error
from app.diffcore.mlp import MlpArch, init_mlp, mlp_forward
from app.diffcore.optim import AdamState, adam_step, lr_schedule
from app.diffcore.params import ParamStore, load_checkpoint, save_checkpoint
from app.diffcore.tensor import Tensor, backward, concat, minimum, shift2d, stack, where

__all__ = [
    "AdamState", "MlpArch", "ParamStore", "Tensor",
    "adam_step", "backward", "concat", "finite_diff_grad", "init_mlp", "load_checkpoint",
    "lr_schedule", "minimum", "mlp_forward", "relative_error", "save_checkpoint", "shift2d",
    "stack", "where",
]
