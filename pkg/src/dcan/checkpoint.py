"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"DCANCKPT"                     magic, 8 bytes
    u32 version
    u64 n, n bytes                  JSON metadata (config, labels, optimizer counters, ...)
    u32 tensor count
    per tensor:
        u16 n, n bytes              UTF-8 name
        u8  dtype code              1 = float64, 2 = float32
        u8  ndim, ndim x u64 dims
        payload                     raw little-endian values, row-major
    u32 CRC-32 of every preceding byte
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ModelConfig, ModelParams, check_params
from .numcore import Tensor
from .training import AdamState

MAGIC = b"DCANCKPT"
VERSION = 1
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<f4")}
_CODES = {np.dtype("float64"): 1, np.dtype("float32"): 2}


@dataclass
class Checkpoint:
    params: ModelParams
    config: ModelConfig
    state: AdamState | None = None
    meta: dict = field(default_factory=dict)


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def dumps(params: ModelParams, config: ModelConfig, state: AdamState | None = None, meta: dict | None = None) -> bytes:
    check_params(params, config)
    header = {"config": config.to_dict(), "extra": meta or {}}
    tensors: list[tuple[str, np.ndarray]] = [(f"param/{n}", t.data) for n, t in params.items()]
    if state is not None:
        header["adam"] = state.hyper()
        for n in params:
            if n in state.mom1:
                tensors.append((f"adam.mom1/{n}", state.mom1[n]))
                tensors.append((f"adam.mom2/{n}", state.mom2[n]))
    parts = [MAGIC, struct.pack("<I", VERSION)]
    meta_bytes = _json_bytes(header)
    parts += [struct.pack("<Q", len(meta_bytes)), meta_bytes, struct.pack("<I", len(tensors))]
    for name, arr in tensors:
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise CheckpointError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save(path, params: ModelParams, config: ModelConfig, state: AdamState | None = None, meta: dict | None = None) -> None:
    data = dumps(params, config, state, meta)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


class _Reader:
    def __init__(self, buf: bytes, end: int):
        self.buf = buf
        self.pos = 0
        self.end = end

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > self.end:
            raise CheckpointError(f"unexpected end of data while reading {what}", self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(data: bytes) -> Checkpoint:
    if len(data) < len(MAGIC) + 4 + 4:
        raise CheckpointError("file too short to be a checkpoint", len(data))
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("bad magic bytes", 0)
    end = len(data) - 4
    (stored_crc,) = struct.unpack("<I", data[end:])
    if zlib.crc32(data[:end]) != stored_crc:
        raise CheckpointError("checksum mismatch (file truncated or corrupt)", end)
    r = _Reader(data, end)
    r.pos = len(MAGIC)
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported format version {version}", r.pos - 4)
    (meta_len,) = r.unpack("<Q", "metadata length")
    meta_pos = r.pos
    try:
        header = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"metadata is not valid JSON: {exc}", meta_pos) from None
    (count,) = r.unpack("<I", "tensor count")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        start = r.pos
        (name_len,) = r.unpack("<H", "tensor name length")
        name = r.take(name_len, "tensor name").decode("utf-8")
        code, ndim = r.unpack("<BB", "tensor dtype")
        if code not in _DTYPES:
            raise CheckpointError(f"tensor {name!r}: unknown dtype code {code}", start)
        shape = r.unpack(f"<{ndim}Q", "tensor shape")
        dt = _DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        payload = r.take(nbytes, f"tensor {name!r}")
        if name in arrays:
            raise CheckpointError(f"duplicate tensor {name!r}", start)
        arrays[name] = np.frombuffer(payload, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    if r.pos != end:
        raise CheckpointError("trailing bytes before checksum", r.pos)

    try:
        config = ModelConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid model config: {exc}", meta_pos) from None
    params = ModelParams()
    for name, arr in arrays.items():
        if name.startswith("param/"):
            pname = name[len("param/"):]
            params[pname] = Tensor(arr, requires_grad=True, name=pname)
    try:
        check_params(params, config)
    except ValueError as exc:
        raise CheckpointError(f"parameters do not match config: {exc}") from None
    state = None
    if "adam" in header:
        state = AdamState(**header["adam"])
        for name, arr in arrays.items():
            if name.startswith("adam.mom1/"):
                state.mom1[name[len("adam.mom1/"):]] = arr
            elif name.startswith("adam.mom2/"):
                state.mom2[name[len("adam.mom2/"):]] = arr
    return Checkpoint(params, config, state, header.get("extra", {}))


def load(path) -> Checkpoint:
    return loads(Path(path).read_bytes())


def check_resume(ckpt: Checkpoint, config: ModelConfig) -> None:
    """Refuse to resume when the checkpoint was trained under a different model config."""
    if ckpt.config.to_dict() != config.to_dict():
        ours, theirs = config.to_dict(), ckpt.config.to_dict()
        diff = sorted(k for k in ours if ours[k] != theirs.get(k))
        raise CheckpointError(f"checkpoint config differs from requested config in: {', '.join(diff)}")
