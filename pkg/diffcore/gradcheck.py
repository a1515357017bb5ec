from typing import Callable, Optional, Sequence

import numpy as np

from utils.errors import NumericError

from .param import Param
from .tape import Tape, Var

LossFn = Callable[[Tape], Var]
GRAD_FLOOR = 1e-8


def _loss_value(loss_fn: LossFn) -> float:
    value = loss_fn(Tape()).item()
    if not np.isfinite(value):
        raise NumericError(f"loss is not finite: {value}")
    return value


def grad_check(loss_fn: LossFn, params: Sequence[Param], step: float = 1e-5,
               max_coords: Optional[int] = None, seed: int = 0) -> float:
    """Largest relative error between tape gradients and central differences.

    ``loss_fn`` records a forward pass on the tape it is given and returns the
    scalar loss. ``max_coords`` caps the coordinates probed per parameter;
    by default every coordinate is probed.
    """
    for p in params:
        p.zero_grad()
    tape = Tape()
    loss = loss_fn(tape)
    if not np.isfinite(loss.item()):
        raise NumericError(f"loss is not finite: {loss.item()}")
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, grad in zip(params, analytic):
        coords = np.arange(p.value.size)
        if max_coords is not None and coords.size > max_coords:
            coords = np.sort(rng.choice(coords, size=max_coords, replace=False))
        flat = p.value.reshape(-1)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + step
            plus = _loss_value(loss_fn)
            flat[idx] = orig - step
            minus = _loss_value(loss_fn)
            flat[idx] = orig
            numeric = (plus - minus) / (2.0 * step)
            a = grad.reshape(-1)[idx]
            # absolute floor for near-zero gradients
            rel = abs(a - numeric) / max(GRAD_FLOOR, abs(a) + abs(numeric))
            worst = max(worst, rel)
    return worst
