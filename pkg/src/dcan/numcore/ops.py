"""Differentiable operations on :class:`Tensor`.

Every function computes its forward result with numpy and, when a tape is
active and an input requires gradients, records a closure that maps the
output gradient to input gradients.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateInputError, ShapeError
from .tensor import RngStream, Tensor, record_op


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}") from exc


# ----------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    _broadcast_shape(a, b)
    out = Tensor(a.data + b.data)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record_op("add", (a, b), out, backward)


def sub(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    _broadcast_shape(a, b)
    out = Tensor(a.data - b.data)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record_op("sub", (a, b), out, backward)


def mul(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    _broadcast_shape(a, b)
    out = Tensor(a.data * b.data)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return record_op("mul", (a, b), out, backward)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    out = Tensor(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return record_op("sum", (x,), out, backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    out = Tensor(np.asarray(x.data.mean(axis=axis, keepdims=keepdims)))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return record_op("mean", (x,), out, backward)


def max(x: Tensor, axis: int = -1) -> Tensor:  # noqa: A001 - mirrors numpy
    """Maximum along one axis; the gradient goes to the first maximal entry."""
    axis = axis % x.ndim
    idx = np.argmax(x.data, axis=axis)
    out = Tensor(np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis))

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return record_op("max", (x,), out, backward)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))

    def backward(g):
        return (g.reshape(x.shape),)

    return record_op("reshape", (x,), out, backward)


def swapaxes(x: Tensor, a: int = -1, b: int = -2) -> Tensor:
    out = Tensor(np.swapaxes(x.data, a, b))

    def backward(g):
        return (np.swapaxes(g, a, b),)

    return record_op("swapaxes", (x,), out, backward)


def transpose(x: Tensor) -> Tensor:
    return swapaxes(x, -1, -2)


# ----------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, with numpy batch broadcasting."""
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = Tensor(np.matmul(a.data, b.data))

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            if a.ndim > 2 and b.ndim == 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return record_op("matmul", (a, b), out, backward)


# ----------------------------------------------------------------------------
# nonlinearities


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.maximum(x.data, 0).astype(x.dtype, copy=False))

    def backward(g):
        return (g * mask,)

    return record_op("relu", (x,), out, backward)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor(y)

    def backward(g):
        return (g * (1.0 - y * y),)

    return record_op("tanh", (x,), out, backward)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _stable_sigmoid(np.asarray(x.data))
    out = Tensor(y)

    def backward(g):
        return (g * y * (1.0 - y),)

    return record_op("sigmoid", (x,), out, backward)


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along ``axis``.

    ``mask`` (boolean, broadcastable to ``x``) marks the entries allowed to
    receive weight; masked-out entries get exactly zero.
    """
    if x.ndim == 0:
        raise ValueError("softmax needs at least one axis")
    axis = axis % x.ndim
    if x.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not mask.any(axis=axis).all():
            raise ValueError("softmax mask leaves an empty slice")
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return record_op("softmax", (x,), out, backward)


def activation(x: Tensor, name: str) -> Tensor:
    if name == "relu":
        return relu(x)
    if name == "tanh":
        return tanh(x)
    if name in ("identity", "linear"):
        return x
    raise ValueError(f"unknown activation {name!r}")


# ----------------------------------------------------------------------------
# layers


def conv1d_dilated(x: Tensor, filters: Tensor, dilation: int) -> Tensor:
    """Causal dilated convolution along the sequence axis.

    ``x`` is ``(n, c_in)`` or ``(batch, n, c_in)``; ``filters`` is
    ``(c_out, c_in, k)``. Output position ``s`` is
    ``sum_i sum_c filters[:, c, i] * x[s - dilation*i, c]``, with positions
    before the start of the sequence read as zero. Output length equals ``n``.
    """
    dilation = int(dilation)
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    if filters.ndim != 3:
        raise ShapeError(f"filters must be (c_out, c_in, k), got {filters.shape}")
    c_out, c_in, k = filters.shape
    if k < 1:
        raise ValueError("kernel size must be >= 1")
    if x.ndim not in (2, 3) or x.shape[-1] != c_in:
        raise ShapeError(f"input {x.shape} does not match filters {filters.shape}")
    n = x.shape[-2]
    pad = (k - 1) * dilation
    lead = x.shape[:-2]
    xp = np.concatenate([np.zeros(lead + (pad, c_in), dtype=x.dtype), x.data], axis=-2) if pad else x.data
    w = filters.data
    # per-tap (c_in, c_out) matrices, contiguous so matmul stays on BLAS
    taps = np.ascontiguousarray(w.transpose(2, 1, 0))
    rows = int(np.prod(lead, dtype=np.int64)) * n

    def window(i):
        start = pad - i * dilation
        return xp[..., start:start + n, :].reshape(rows, c_in)

    out2 = np.zeros((rows, c_out), dtype=np.result_type(x.dtype, w.dtype))
    for i in range(k):
        out2 += window(i) @ taps[i]
    out = Tensor(out2.reshape(lead + (n, c_out)))

    def backward(g):
        g2 = g.reshape(rows, c_out)
        gx = gw = None
        if x.requires_grad:
            gxp = np.zeros(lead + (n + pad, c_in), dtype=g.dtype)
            for i in range(k):
                start = pad - i * dilation
                gxp[..., start:start + n, :] += (g2 @ taps[i].T).reshape(lead + (n, c_in))
            gx = gxp[..., pad:, :]
        if filters.requires_grad:
            gw = np.empty_like(w)
            g2t = np.ascontiguousarray(g2.T)
            for i in range(k):
                gw[:, :, i] = g2t @ window(i)
        return gx, gw

    return record_op("conv1d_dilated", (x, filters), out, backward)


def weight_norm(v: Tensor, g: Tensor) -> Tensor:
    """Reparameterize ``v`` as ``g * v / ||v||`` per output channel (axis 0)."""
    if g.shape != (v.shape[0],):
        raise ShapeError(f"gain shape {g.shape} must be ({v.shape[0]},)")
    axes = tuple(range(1, v.ndim))
    norm = np.sqrt((v.data * v.data).sum(axis=axes))
    if np.any(norm == 0):
        raise DegenerateInputError("weight_norm: zero-norm direction vector")
    bshape = (-1,) + (1,) * (v.ndim - 1)
    unit = v.data / norm.reshape(bshape)
    out = Tensor(g.data.reshape(bshape) * unit)

    def backward(grad):
        proj = (grad * unit).sum(axis=axes)
        gg = proj
        gv = (g.data / norm).reshape(bshape) * (grad - proj.reshape(bshape) * unit)
        return gv, gg

    return record_op("weight_norm", (v, g), out, backward)


def dropout(x: Tensor, rate: float, training: bool, rng: RngStream | None) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an RngStream")
    keep = rng.random(x.shape, dtype=x.dtype) >= rate
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    mask = keep * scale
    out = Tensor((x.data * mask).astype(x.dtype, copy=False))

    def backward(g):
        return (g * mask,)

    return record_op("dropout", (x,), out, backward)


def embedding(table: Tensor, ids: np.ndarray, padding_idx: int | None = None) -> Tensor:
    """Row lookup ``table[ids]``.

    Positions holding ``padding_idx`` embed to zero whatever that table row
    contains, so the row has no influence and never receives gradient.
    """
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise TypeError("token ids must be integers")
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = ids[(ids < 0) | (ids >= vocab)].flat[0]
        raise IndexError(f"token id {bad} out of range for vocabulary of size {vocab}")
    rows = table.data[ids]
    if padding_idx is not None:
        rows[ids == padding_idx] = 0.0
    out = Tensor(rows)

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        if padding_idx is not None:
            gt[padding_idx] = 0.0
        return (gt,)

    return record_op("embedding", (table,), out, backward)


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Binary cross-entropy summed over the last axis and averaged over the rest.

    Computed as ``softplus(z) - y*z``, which equals
    ``-y log(sigmoid z) - (1-y) log(1 - sigmoid z)`` without forming logs of
    probabilities.
    """
    y = np.asarray(targets, dtype=logits.dtype)
    if y.shape != logits.shape:
        raise ShapeError(f"targets {y.shape} do not match logits {logits.shape}")
    z = logits.data
    per = np.logaddexp(0.0, z) - y * z
    per_example = per.sum(axis=-1)
    batch = per_example.size
    out = Tensor(np.asarray(per_example.mean()))

    def backward(g):
        return (g * (_stable_sigmoid(z) - y) / batch,)

    return record_op("bce_with_logits", (logits,), out, backward)
