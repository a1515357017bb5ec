"""
Forward kernels on dense double-precision matrices.

Every function is pure: same inputs, bit-identical output. The tape in
``diffcore.tape`` records these kernels and supplies their adjoints.
"""
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from utils.errors import DimensionError, EmptyBagError, NumericError

Tensor2D = NDArray[np.float64]
ActivationKind = Literal["tanh", "leaky_relu", "sigmoid"]

LEAKY_SLOPE = 0.01
BCE_EPS = 1e-7


def as_tensor2d(values: ArrayLike, *, name: str = "tensor") -> Tensor2D:
    """Coerce to a finite 2-D float64 array; vectors become one row."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"{name}: expected at most 2 dimensions, got {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name}: non-finite values")
    return arr


def linear_forward(x: ArrayLike, weight: ArrayLike, bias: ArrayLike) -> Tensor2D:
    x = as_tensor2d(x, name="x")
    weight = as_tensor2d(weight, name="weight")
    bias = as_tensor2d(bias, name="bias").reshape(-1)
    if x.shape[1] != weight.shape[0]:
        raise DimensionError(f"linear: x is {x.shape}, weight is {weight.shape}")
    if bias.shape[0] != weight.shape[1]:
        raise DimensionError(f"linear: bias has {bias.shape[0]} entries, expected {weight.shape[1]}")
    return x @ weight + bias


def sigmoid(z: ArrayLike) -> Tensor2D:
    z = np.asarray(z, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activation(x: ArrayLike, kind: ActivationKind) -> Tensor2D:
    x = np.asarray(x, dtype=np.float64)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "leaky_relu":
        return np.where(x >= 0, x, LEAKY_SLOPE * x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unsupported activation: {kind}")


def softmax_instances(s: ArrayLike, axis: int = 0) -> Tensor2D:
    """Softmax along ``axis`` (instances by default) with max-subtraction."""
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        raise EmptyBagError("softmax over an empty bag")
    shifted = s - np.max(s, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def bce_loss(p: float, y: int) -> float:
    p = float(np.clip(p, BCE_EPS, 1.0 - BCE_EPS))
    return -(y * np.log(p) + (1 - y) * np.log(1.0 - p))
