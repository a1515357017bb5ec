from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from utils.errors import DimensionError

from .ops import Tensor2D, as_tensor2d


@dataclass
class Param:
    """A trainable tensor with its gradient and Adam moments."""
    value: Tensor2D
    name: str = ""
    grad: Tensor2D = field(init=False)
    adam_m: Tensor2D = field(init=False)
    adam_v: Tensor2D = field(init=False)
    step: int = field(default=0, init=False)

    def __post_init__(self):
        self.value = as_tensor2d(self.value, name=self.name or "param").copy()
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    @classmethod
    def uniform(cls, rng: np.random.Generator, shape, fan_in: int, name: str = "") -> "Param":
        bound = 1.0 / np.sqrt(fan_in)
        return cls(rng.uniform(-bound, bound, size=shape), name=name)

    @classmethod
    def zeros(cls, shape, name: str = "") -> "Param":
        return cls(np.zeros(shape), name=name)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def assign(self, values: ArrayLike) -> None:
        arr = as_tensor2d(values, name=self.name or "param")
        if arr.shape != self.value.shape:
            raise DimensionError(f"{self.name}: cannot assign {arr.shape} to {self.value.shape}")
        self.value[...] = arr
