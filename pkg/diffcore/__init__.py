"""Dense double-precision reverse-mode core used to train the bag classifiers."""
from .gradcheck import grad_check
from .ops import (
    BCE_EPS,
    LEAKY_SLOPE,
    Tensor2D,
    activation,
    as_tensor2d,
    bce_loss,
    linear_forward,
    sigmoid,
    softmax_instances,
)
from .optim import adam_step, cosine_anneal, zero_grad
from .param import Param
from .tape import Tape, Var, backward

__all__ = [
    "BCE_EPS", "LEAKY_SLOPE", "Tensor2D", "activation", "as_tensor2d", "bce_loss",
    "linear_forward", "sigmoid", "softmax_instances", "adam_step", "cosine_anneal",
    "zero_grad", "Param", "Tape", "Var", "backward", "grad_check",
]
