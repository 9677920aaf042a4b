from . import ops
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .tensor import (
    GradTape,
    ShapeError,
    Tensor,
    backward,
    default_dtype,
    get_tape,
    grad_enabled,
    no_grad,
    precision,
    set_debug,
    set_precision,
)

__all__ = [
    "ops", "Tensor", "GradTape", "ShapeError", "backward", "default_dtype", "get_tape",
    "grad_enabled", "no_grad", "precision", "set_debug", "set_precision",
    "save_checkpoint", "load_checkpoint", "CheckpointError",
]
