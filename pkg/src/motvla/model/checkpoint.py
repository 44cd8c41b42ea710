"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    b"MOTC"  u32 version
    u32 n_lines, then n_lines x (u32 byte length, UTF-8 "key=value")
    u32 n_tensors, then per tensor:
        u32 name length, UTF-8 name, u32 rank, rank x u64 extents,
        prod(extents) x f64 values in row-major order

Model config keys are stored bare; anything else the caller attaches goes
under a ``meta.`` prefix.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..tensor import Tensor
from .config import ModelConfig
from .mot import MoTParams

MAGIC = b"MOTC"
VERSION = 1


class CheckpointError(ValueError):
    """The file is not a checkpoint, or does not fit the expected config."""


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def encode_checkpoint(config: ModelConfig, tensors: dict[str, np.ndarray], meta: dict[str, str] | None = None) -> bytes:
    lines = [f"{k}={v}" for k, v in config.to_dict().items()]
    lines += [f"meta.{k}={v}" for k, v in (meta or {}).items()]
    out = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(lines))]
    out += [_pack_str(line) for line in lines]
    out.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        out.append(_pack_str(name))
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def decode_checkpoint(blob: bytes) -> tuple[ModelConfig, dict[str, np.ndarray], dict[str, str]]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = 4

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, blob, pos)
        pos += struct.calcsize(fmt)
        return vals

    def take_str():
        nonlocal pos
        (n,) = take("<I")
        s = blob[pos : pos + n].decode("utf-8")
        pos += n
        return s

    (version,) = take("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (n_lines,) = take("<I")
    cfg_vals, meta = {}, {}
    for _ in range(n_lines):
        key, _, value = take_str().partition("=")
        if key.startswith("meta."):
            meta[key[5:]] = value
        else:
            cfg_vals[key] = value
    config = ModelConfig.from_dict(cfg_vals)
    (n_tensors,) = take("<I")
    tensors = {}
    for _ in range(n_tensors):
        name = take_str()
        (rank,) = take("<I")
        shape = take(f"<{rank}Q")
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape)
        pos += 8 * count
        tensors[name] = arr.astype(np.float64)
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after tensor table")
    return config, tensors, meta


def save_checkpoint(path, params: MoTParams, meta: dict[str, str] | None = None,
                    extra: dict[str, np.ndarray] | None = None) -> None:
    tensors = {k: t.data for k, t in params.tensors.items()}
    tensors.update(extra or {})
    Path(path).write_bytes(encode_checkpoint(params.config, tensors, meta))


def load_checkpoint(path, expect: ModelConfig | None = None):
    """Returns (params, meta, extra tensors not belonging to the model)."""
    config, tensors, meta = decode_checkpoint(Path(path).read_bytes())
    if expect is not None and expect != config:
        diffs = {k: (v, config.to_dict()[k]) for k, v in expect.to_dict().items() if config.to_dict()[k] != v}
        raise CheckpointError(f"checkpoint config differs from requested config: {diffs}")
    from .mot import _shapes

    shapes = _shapes(config)
    params = {}
    for name, (shape, _) in shapes.items():
        if name not in tensors:
            raise CheckpointError(f"checkpoint is missing parameter {name}")
        if tensors[name].shape != shape:
            raise CheckpointError(f"parameter {name} has shape {tensors[name].shape}, expected {shape}")
        params[name] = Tensor(tensors.pop(name), requires_grad=True, name=name)
    return MoTParams(config, params), meta, tensors
