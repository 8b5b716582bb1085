"""Dilated convolutional attention network.

Pipeline: token embedding -> stacked residual blocks of causal dilated
convolutions -> per-label dot-product attention over positions -> shared
linear projection pooled to one logit per label.

Inputs may be a single sequence ``(n,)`` or a right-padded batch ``(B, n)``
with a boolean mask. Right padding is exact: causal convolutions never look
ahead, PAD embeds to zero, and the attention softmax excludes masked
positions.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from . import numcore as nc
from .errors import ShapeError
from .numcore import RngStream, Tensor

PAD_ID = 0
UNK_ID = 1


@dataclass
class ModelConfig:
    vocab_size: int
    num_labels: int
    embed_dim: int = 100
    kernel_size: int = 3
    num_levels: int = 7
    channels: tuple[int, ...] | None = None
    dilations: tuple[int, ...] | None = None
    projection_dim: int = 8
    dropout_rate: float = 0.2
    max_len: int = 2500
    activation: str = "relu"
    pooling: str = "max"
    dtype: str = "float64"

    def __post_init__(self):
        if self.channels is None:
            self.channels = (32,) * self.num_levels
        self.channels = tuple(int(c) for c in self.channels)
        if self.dilations is not None:
            self.dilations = tuple(int(d) for d in self.dilations)
        self.validate()

    def validate(self) -> None:
        for name in ("vocab_size", "num_labels", "embed_dim", "kernel_size", "num_levels",
                     "projection_dim", "max_len"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must include PAD and UNK")
        if len(self.channels) != self.num_levels or min(self.channels) < 1:
            raise ValueError(f"channels {self.channels} must list {self.num_levels} positive sizes")
        if self.dilations is not None and (len(self.dilations) != self.num_levels or min(self.dilations) < 1):
            raise ValueError(f"dilations {self.dilations} must list {self.num_levels} positive ints")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.pooling not in ("max", "mean"):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"dtype must be float64 or float32, got {self.dtype!r}")

    def dilation(self, level: int) -> int:
        if self.dilations is not None:
            return self.dilations[level]
        return 2 ** level

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["dilations"] = None if self.dilations is None else list(self.dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class ModelParams:
    """Named learnable tensors, in a fixed order.

    Names: ``embedding``; ``block{l}.conv{j}.v|g|b`` for j in (1, 2);
    ``block{l}.proj`` when a level changes width; ``attention.U``;
    ``classifier.W`` and ``classifier.b``.
    """

    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __setitem__(self, name: str, value: Tensor) -> None:
        self.tensors[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def values(self):
        return self.tensors.values()

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def copy(self) -> "ModelParams":
        return ModelParams({k: Tensor(v.data.copy(), requires_grad=True, name=k) for k, v in self.tensors.items()})

    def num_parameters(self) -> int:
        return int(sum(t.data.size for t in self.tensors.values()))


def init_params(config: ModelConfig, rng: RngStream) -> ModelParams:
    """Uniform fan-in initialization.

    Linear maps and conv directions draw from U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    with fan_in = in_channels * kernel_size for convs. Embedding rows are a
    lookup of a one-hot input (fan-in 1), hence U(-1, 1). Conv gains are set to the initial direction
    norm so the first effective weight equals ``v``. Biases start at zero and
    the PAD embedding row is zero.
    """
    dt = config.np_dtype

    def uniform(shape, fan_in, scale=1.0):
        bound = scale / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, shape).astype(dt)

    p = ModelParams()
    emb = uniform((config.vocab_size, config.embed_dim), 1)
    emb[PAD_ID] = 0.0
    p["embedding"] = emb
    c_in = config.embed_dim
    k = config.kernel_size
    for level, c_out in enumerate(config.channels):
        width = c_in
        for j in (1, 2):
            v = uniform((c_out, width, k), width * k)
            p[f"block{level}.conv{j}.v"] = v
            p[f"block{level}.conv{j}.g"] = np.sqrt((v * v).sum(axis=(1, 2)))
            p[f"block{level}.conv{j}.b"] = np.zeros(c_out, dtype=dt)
            width = c_out
        if c_in != c_out:
            p[f"block{level}.proj"] = uniform((c_out, c_in), c_in)
        c_in = c_out
    h_last = config.channels[-1]
    p["attention.U"] = uniform((h_last, config.num_labels), h_last)
    p["classifier.W"] = uniform((config.projection_dim, h_last), h_last)
    p["classifier.b"] = np.zeros((1, config.projection_dim), dtype=dt)
    for name, arr in list(p.tensors.items()):
        p[name] = Tensor(np.asarray(arr, dtype=dt), requires_grad=True, name=name)
    return p


def check_params(params: ModelParams, config: ModelConfig) -> None:
    """Raise :class:`ShapeError` if ``params`` does not fit ``config``."""
    ref = expected_shapes(config)
    if list(ref) != list(params):
        missing = set(ref) ^ set(params)
        raise ShapeError(f"parameter names differ from config: {sorted(missing)}")
    for name, shape in ref.items():
        if params[name].shape != shape:
            raise ShapeError(f"{name}: shape {params[name].shape}, config expects {shape}")


def expected_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes = {"embedding": (config.vocab_size, config.embed_dim)}
    c_in = config.embed_dim
    for level, c_out in enumerate(config.channels):
        width = c_in
        for j in (1, 2):
            shapes[f"block{level}.conv{j}.v"] = (c_out, width, config.kernel_size)
            shapes[f"block{level}.conv{j}.g"] = (c_out,)
            shapes[f"block{level}.conv{j}.b"] = (c_out,)
            width = c_out
        if c_in != c_out:
            shapes[f"block{level}.proj"] = (c_out, c_in)
        c_in = c_out
    h_last = config.channels[-1]
    shapes["attention.U"] = (h_last, config.num_labels)
    shapes["classifier.W"] = (config.projection_dim, h_last)
    shapes["classifier.b"] = (1, config.projection_dim)
    return shapes


def parameter_counts(params: ModelParams) -> dict[str, int]:
    """Trainable parameter counts grouped by component, plus the total."""
    counts: dict[str, int] = {}
    for name, t in params.items():
        group = name.split(".")[0]
        if group == "attention":
            group = "label_attention"
        elif group == "classifier":
            group = "classifier"
        counts[group] = counts.get(group, 0) + int(t.data.size)
    counts["total"] = params.num_parameters()
    return counts


# ----------------------------------------------------------------------------
# forward pieces


def embed(token_ids, params: ModelParams) -> Tensor:
    return nc.embedding(params["embedding"], np.asarray(token_ids), padding_idx=PAD_ID)


def residual_block_forward(
    H: Tensor,
    level: int,
    params: ModelParams,
    config: ModelConfig,
    training: bool = False,
    rng: RngStream | None = None,
) -> Tensor:
    """act(H + G(H)) where G is two rounds of weight-norm conv, activation, dropout."""
    if not 0 <= level < config.num_levels:
        raise ValueError(f"level {level} outside 0..{config.num_levels - 1}")
    d = config.dilation(level)
    z = H
    for j in (1, 2):
        w = nc.weight_norm(params[f"block{level}.conv{j}.v"], params[f"block{level}.conv{j}.g"])
        z = nc.conv1d_dilated(z, w, d) + params[f"block{level}.conv{j}.b"]
        z = nc.activation(z, config.activation)
        z = nc.dropout(z, config.dropout_rate, training, rng)
    proj = f"block{level}.proj"
    res = nc.matmul(H, nc.transpose(params[proj])) if proj in params else H
    if res.shape != z.shape:
        raise ShapeError(f"residual path {res.shape} does not match block output {z.shape}")
    return nc.activation(res + z, config.activation)


def encode_sequence(token_ids, params, config, training=False, rng=None) -> Tensor:
    H = embed(token_ids, params)
    for level in range(config.num_levels):
        H = residual_block_forward(H, level, params, config, training, rng)
    return H


def label_attention(H: Tensor, U: Tensor, mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Attention weights ``A`` (softmax over positions, one column per label) and ``V = A^T H``."""
    if H.shape[-2] == 0:
        raise ValueError("label attention over an empty sequence")
    scores = nc.matmul(H, U)
    m = None if mask is None else np.asarray(mask, dtype=bool)[..., :, None]
    A = nc.softmax(scores, axis=-2, mask=m)
    V = nc.matmul(nc.transpose(A), H)
    return A, V


def classify_pool(V: Tensor, W: Tensor, b: Tensor, pooling: str = "max") -> tuple[Tensor, Tensor]:
    """Project each label row with the shared ``W``, pool over the projection, squash."""
    Y = nc.matmul(V, nc.transpose(W)) + b
    if pooling == "max":
        logits = nc.reduce_max(Y, axis=-1)
    elif pooling == "mean":
        logits = nc.mean(Y, axis=-1)
    else:
        raise ValueError(f"unknown pooling {pooling!r}")
    return logits, nc.sigmoid(logits)


def model_logits(token_ids, params, config, training=False, rng=None, mask=None) -> Tensor:
    ids = np.asarray(token_ids)
    if ids.shape[-1] == 0:
        raise ValueError("empty token sequence")
    if ids.shape[-1] > config.max_len:
        raise ValueError(f"sequence length {ids.shape[-1]} exceeds max_len {config.max_len}")
    H = encode_sequence(ids, params, config, training, rng)
    _, V = label_attention(H, params["attention.U"], mask)
    logits, _ = classify_pool(V, params["classifier.W"], params["classifier.b"], config.pooling)
    return logits


def model_forward(token_ids, params, config, training=False, rng=None, mask=None) -> Tensor:
    """Label probabilities, shape ``(m,)`` or ``(B, m)``."""
    return nc.sigmoid(model_logits(token_ids, params, config, training, rng, mask))


def receptive_field(config: ModelConfig) -> int:
    """Number of input positions that can influence one encoder output."""
    total = sum(config.dilation(level) for level in range(config.num_levels))
    return 1 + 2 * (config.kernel_size - 1) * total
