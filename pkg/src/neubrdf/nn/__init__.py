"""Dense tensors, reverse-mode gradients, MLPs and Adam."""

from .autodiff import Tensor, no_grad
from .mlp import MLP, MLPConfig, ShapeError, StaleTapeError, Tape, mlp_backward, mlp_forward
from .optim import Adam, AdamConfig, AdamState, GradientReport, adam_step, gradient_check

__all__ = [
    "Tensor", "no_grad", "MLP", "MLPConfig", "ShapeError", "StaleTapeError", "Tape",
    "mlp_forward", "mlp_backward", "Adam", "AdamConfig", "AdamState",
    "GradientReport", "adam_step", "gradient_check",
]
