"""Tensor container, operation tape and seeded random streams."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import ShapeError

DEFAULT_DTYPE = np.float64


class Tensor:
    """Dense floating-point array with an optional gradient slot.

    Float numpy arrays keep their dtype; anything else is converted to
    float64 unless ``dtype`` says otherwise.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if dtype is None:
            arr = np.asarray(data)
            if arr.dtype.kind != "f":
                arr = arr.astype(DEFAULT_DTYPE)
        else:
            arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            raise TypeError(f"Tensor requires a floating dtype, got {arr.dtype}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    # Operator sugar; the implementations live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None:
        dtype = DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


@dataclass
class TapeRecord:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; every op executed inside the ``with`` block whose
    inputs require gradients is appended to the tape.
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self.records: list[TapeRecord] = []

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def active(cls) -> "Tape | None":
        return cls._stack[-1] if cls._stack else None

    def record(self, op, inputs, output, backward) -> None:
        self.records.append(TapeRecord(op, tuple(inputs), output, backward))

    def backward(self, loss: Tensor) -> None:
        from .autodiff import backward

        backward(loss, self)


def record_op(op: str, inputs: Sequence[Tensor], output: Tensor, backward) -> Tensor:
    """Mark ``output`` as differentiable and record it if any input needs a gradient."""
    tape = Tape.active()
    if tape is not None and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        tape.record(op, inputs, output, backward)
    return output


class no_grad:
    """Context manager that suspends recording on the active tape."""

    def __enter__(self):
        self._saved = Tape._stack
        Tape._stack = []
        return self

    def __exit__(self, *exc):
        Tape._stack = self._saved


@dataclass
class RngStream:
    """Seeded deterministic random stream (PCG64 bit generator).

    ``stream`` distinguishes independent streams derived from one seed, so
    initialization, shuffling and dropout never share state.
    """

    seed: int
    stream: int = 0
    algorithm: str = field(default="PCG64", init=False)

    def __post_init__(self):
        seq = np.random.SeedSequence([int(self.seed) & 0xFFFFFFFFFFFFFFFF, int(self.stream)])
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)

    def random(self, shape, dtype=np.float64) -> np.ndarray:
        return self.generator.random(shape, dtype=dtype)

    def uniform(self, low, high, shape) -> np.ndarray:
        return self.generator.uniform(low, high, shape)

    def normal(self, shape, scale=1.0) -> np.ndarray:
        return self.generator.normal(0.0, scale, shape)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def get_state(self) -> dict:
        return self.generator.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.generator.bit_generator.state = state
