"""Central-difference verification of tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import NondeterminismError
from . import ops
from .autodiff import backward
from .tensor import Tape, Tensor, no_grad


def _scalarize(out: Tensor, weights: np.ndarray | None) -> Tensor:
    if out.data.size == 1:
        return ops.reshape(out, ())
    return ops.sum(ops.mul(out, weights))


def grad_check(
    f: Callable[..., Tensor],
    inputs: Tensor | Sequence[Tensor],
    epsilon: float = 1e-5,
    seed: int = 0,
    max_coords: int | None = None,
) -> float:
    """Largest relative error between tape gradients and central differences.

    ``f`` maps the input tensors to a tensor. Non-scalar outputs are contracted
    with fixed random weights so every output coordinate contributes. The
    error per coordinate is ``|a - n| / max(1, |a|, |n|)``.

    ``max_coords`` limits how many coordinates per input are probed (chosen
    at random with ``seed``); ``None`` probes all of them.
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    inputs = list(inputs)
    rng = np.random.default_rng(seed)

    with no_grad():
        base = f(*inputs)
        again = f(*inputs)
    if not np.array_equal(base.data, again.data):
        raise NondeterminismError("grad_check: f returned different values for identical inputs")
    weights = None if base.data.size == 1 else rng.standard_normal(base.shape)

    for t in inputs:
        t.requires_grad = True
        t.zero_grad()
    with Tape() as tape:
        loss = _scalarize(f(*inputs), weights)
    backward(loss, tape)

    def value() -> float:
        with no_grad():
            return float(_scalarize(f(*inputs), weights).data)

    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for j in coords:
            orig = flat[j]
            flat[j] = orig + epsilon
            plus = value()
            flat[j] = orig - epsilon
            minus = value()
            flat[j] = orig
            numeric = (plus - minus) / (2 * epsilon)
            a = float(analytic.reshape(-1)[j])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
