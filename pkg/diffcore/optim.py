import math
from typing import Iterable

import numpy as np

from utils.errors import RangeError

from .param import Param

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_step(params: Iterable[Param], lr: float,
              beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2, eps: float = ADAM_EPS) -> None:
    """Bias-corrected Adam update in place; increments each ``Param.step``."""
    for p in params:
        p.step += 1
        g = p.grad
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * g * g
        m_hat = p.adam_m / (1.0 - beta1 ** p.step)
        v_hat = p.adam_v / (1.0 - beta2 ** p.step)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)


def zero_grad(params: Iterable[Param]) -> None:
    for p in params:
        p.zero_grad()


def cosine_anneal(lr0: float, lr_min: float, t: int, T: int) -> float:
    if T < 1:
        raise RangeError(f"cosine_anneal: T must be >= 1, got {T}")
    if t < 0 or t > T:
        raise RangeError(f"cosine_anneal: t={t} outside [0, {T}]")
    if t == 0:
        return lr0
    if t == T:
        return lr_min
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * t / T))
