"""Reverse-mode differentiation over a recorded tape."""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor


def backward(loss: Tensor, tape: Tape) -> None:
    """Propagate d(loss)/d(tensor) into ``.grad`` of every tensor on the tape.

    Gradients add to whatever is already stored, so parameters shared across
    several uses (or several calls) accumulate. Callers zero them between steps.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    seed = np.ones_like(loss.data)
    loss.accumulate_grad(seed)
    for rec in reversed(tape.records):
        g = rec.output.grad
        if g is None:
            continue
        input_grads = rec.backward(g)
        for tensor, tg in zip(rec.inputs, input_grads):
            if tg is None or not tensor.requires_grad:
                continue
            tensor.accumulate_grad(tg)
