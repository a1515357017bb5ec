"""
Tape-based reverse-mode differentiation.

A ``Tape`` records every forward op as a node holding its value and a
closure that propagates the node's gradient to its parents. ``backward``
replays the nodes in reverse from a single 1x1 root and adds the resulting
leaf gradients into the ``Param.grad`` of every parameter that was read.

    tape = Tape()
    h = tape.const(H)
    a = tape.softmax(tape.linear(h, tape.param(w)))
    loss = tape.bce(tape.sigmoid(...), y)
    tape.backward()
"""
from typing import Callable, List, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike

from utils.errors import DimensionError, StateError

from . import ops
from .param import Param

Tensor2D = ops.Tensor2D


class Var:
    __slots__ = ("value", "grad", "requires_grad", "param", "_backward")

    def __init__(self, value: Tensor2D, requires_grad: bool, param: Optional[Param] = None):
        self.value = value
        self.grad: Optional[Tensor2D] = None
        self.requires_grad = requires_grad
        self.param = param
        self._backward: Optional[Callable[[Tensor2D], None]] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def _accumulate(self, g: Tensor2D) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g


def _unbroadcast(g: Tensor2D, shape: Tuple[int, int]) -> Tensor2D:
    for axis in (0, 1):
        if shape[axis] == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tape:
    def __init__(self):
        self._nodes: List[Var] = []
        self._leaves: List[Var] = []

    def __len__(self) -> int:
        return len(self._nodes)

    # -- leaves -----------------------------------------------------------

    def param(self, p: Param) -> Var:
        v = Var(p.value, requires_grad=True, param=p)
        self._leaves.append(v)
        return v

    def const(self, values: ArrayLike) -> Var:
        return Var(ops.as_tensor2d(values, name="constant"), requires_grad=False)

    def _node(self, value: Tensor2D, parents: Tuple[Var, ...], backward: Callable[[Tensor2D], None]) -> Var:
        out = Var(value, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._backward = backward
        self._nodes.append(out)
        return out

    # -- ops --------------------------------------------------------------

    def linear(self, x: Var, weight: Var, bias: Optional[Var] = None) -> Var:
        if x.shape[1] != weight.shape[0]:
            raise DimensionError(f"linear: x is {x.shape}, weight is {weight.shape}")
        if bias is not None and bias.value.size != weight.shape[1]:
            raise DimensionError(f"linear: bias has {bias.value.size} entries, expected {weight.shape[1]}")
        value = x.value @ weight.value
        if bias is not None:
            value = value + bias.value.reshape(1, -1)

        def backward(g: Tensor2D) -> None:
            if x.requires_grad:
                x._accumulate(g @ weight.value.T)
            if weight.requires_grad:
                weight._accumulate(x.value.T @ g)
            if bias is not None and bias.requires_grad:
                bias._accumulate(g.sum(axis=0, keepdims=True).reshape(bias.shape))

        parents = (x, weight) if bias is None else (x, weight, bias)
        return self._node(value, parents, backward)

    def transpose(self, x: Var) -> Var:
        return self._node(x.value.T, (x,), lambda g: x._accumulate(g.T))

    def activation(self, x: Var, kind: ops.ActivationKind) -> Var:
        value = ops.activation(x.value, kind)
        if kind == "tanh":
            local = 1.0 - value * value
        elif kind == "leaky_relu":
            local = np.where(x.value >= 0, 1.0, ops.LEAKY_SLOPE)
        else:
            local = value * (1.0 - value)
        return self._node(value, (x,), lambda g: x._accumulate(g * local))

    def tanh(self, x: Var) -> Var:
        return self.activation(x, "tanh")

    def leaky_relu(self, x: Var) -> Var:
        return self.activation(x, "leaky_relu")

    def sigmoid(self, x: Var) -> Var:
        return self.activation(x, "sigmoid")

    def softmax(self, s: Var, axis: int = 0) -> Var:
        value = ops.softmax_instances(s.value, axis=axis)

        def backward(g: Tensor2D) -> None:
            inner = np.sum(g * value, axis=axis, keepdims=True)
            s._accumulate(value * (g - inner))

        return self._node(value, (s,), backward)

    def mul(self, a: Var, b: Var) -> Var:
        """Elementwise product with row/column broadcasting."""
        try:
            value = a.value * b.value
        except ValueError as exc:
            raise DimensionError(f"mul: {a.shape} and {b.shape} do not broadcast") from exc

        def backward(g: Tensor2D) -> None:
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.value, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.value, b.shape))

        return self._node(value, (a, b), backward)

    def add(self, a: Var, b: Var) -> Var:
        try:
            value = a.value + b.value
        except ValueError as exc:
            raise DimensionError(f"add: {a.shape} and {b.shape} do not broadcast") from exc

        def backward(g: Tensor2D) -> None:
            a._accumulate(_unbroadcast(g, a.shape))
            b._accumulate(_unbroadcast(g, b.shape))

        return self._node(value, (a, b), backward)

    def sum(self, x: Var, axis: Optional[int] = None) -> Var:
        """Sum over rows (axis 0), columns (axis 1) or everything (None)."""
        if axis is None:
            value = np.sum(x.value).reshape(1, 1)
        else:
            value = np.sum(x.value, axis=axis, keepdims=True)
        shape = x.shape
        return self._node(value, (x,), lambda g: x._accumulate(np.broadcast_to(g, shape)))

    def pick(self, x: Var, row: int, col: int) -> Var:
        value = x.value[row:row + 1, col:col + 1].copy()

        def backward(g: Tensor2D) -> None:
            full = np.zeros_like(x.value)
            full[row, col] = g[0, 0]
            x._accumulate(full)

        return self._node(value, (x,), backward)

    def bce(self, p: Var, y: int) -> Var:
        """Binary cross-entropy of a 1x1 probability; clamped to [eps, 1-eps]."""
        if p.shape != (1, 1):
            raise DimensionError(f"bce expects a 1x1 probability, got {p.shape}")
        raw = p.item()
        clamped = min(max(raw, ops.BCE_EPS), 1.0 - ops.BCE_EPS)
        value = np.array([[ops.bce_loss(raw, y)]])

        def backward(g: Tensor2D) -> None:
            if raw != clamped:
                p._accumulate(np.zeros((1, 1)))
                return
            d = -(y / clamped) + (1 - y) / (1.0 - clamped)
            p._accumulate(g * d)

        return self._node(value, (p,), backward)

    # -- reverse pass -----------------------------------------------------

    def backward(self, root: Optional[Var] = None) -> None:
        if not self._nodes:
            raise StateError("backward called before any forward op was recorded")
        root = root if root is not None else self._nodes[-1]
        if root.shape != (1, 1):
            raise StateError(f"backward needs a scalar root, got {root.shape}")
        for node in self._nodes:
            node.grad = None
        for leaf in self._leaves:
            leaf.grad = None
        root.grad = np.ones((1, 1))
        for node in reversed(self._nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)
        for leaf in self._leaves:
            if leaf.grad is not None:
                leaf.param.grad += leaf.grad


def backward(tape: Tape, root: Optional[Var] = None) -> None:
    tape.backward(root)
