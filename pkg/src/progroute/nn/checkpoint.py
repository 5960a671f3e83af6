"""Binary model checkpoints.

Layout (little-endian): magic ``PVWT``, u32 version, u32 descriptor length,
UTF-8 JSON descriptor (input shape + layer list), u32 parameter count, then
per parameter: u8 lock flag, u32 ndim, u32 dims..., float32 values.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .network import Network

MAGIC = b"PVWT"
VERSION = 1


class CheckpointError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        where = "" if offset is None else f" (offset {offset})"
        super().__init__(message + where)
        self.offset = offset


def checkpoint_bytes(net: Network) -> bytes:
    desc = json.dumps({"input_shape": list(net.input_shape), "layers": net.describe()},
                      sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(desc)), desc]
    params = net.parameters()
    parts.append(struct.pack("<I", len(params)))
    for p in params:
        parts.append(struct.pack("<BI", int(p.locked), p.values.ndim))
        parts.append(struct.pack(f"<{p.values.ndim}I", *p.values.shape))
        parts.append(np.ascontiguousarray(p.values, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(net: Network, path) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(checkpoint_bytes(net))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.raw):
            raise CheckpointError("truncated checkpoint", self.pos)
        out = struct.unpack_from(fmt, self.raw, self.pos)
        self.pos += size
        return out

    def block(self, size: int) -> bytes:
        if self.pos + size > len(self.raw):
            raise CheckpointError("truncated checkpoint", self.pos)
        out = self.raw[self.pos:self.pos + size]
        self.pos += size
        return out


def load_checkpoint(path, net: Network | None = None) -> Network:
    """Load a checkpoint, into ``net`` if given (topology must match)."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: expected magic {MAGIC!r}, found {raw[:4]!r}", 0)
    rd = _Reader(raw)
    rd.pos = 4
    version, dlen = rd.take("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}", 4)
    try:
        desc = json.loads(rd.block(dlen).decode())
        input_shape, layers = tuple(desc["input_shape"]), desc["layers"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: corrupt topology descriptor ({exc})", 12) from None
    if net is None:
        try:
            net = Network.from_description(layers, input_shape)
        except (ValueError, TypeError) as exc:
            raise CheckpointError(f"{path}: cannot rebuild topology ({exc})", 12) from None
    elif (list(net.input_shape) != list(input_shape)
          or json.loads(json.dumps(net.describe())) != layers):
        raise CheckpointError(f"{path}: topology does not match the constructing configuration")
    params = net.parameters()
    (count,) = rd.take("<I")
    if count != len(params):
        raise CheckpointError(f"{path}: {count} parameters stored, network has {len(params)}",
                              rd.pos - 4)
    loaded = []
    for p in params:
        locked, ndim = rd.take("<BI")
        shape = rd.take(f"<{ndim}I")
        if tuple(shape) != p.values.shape:
            raise CheckpointError(f"{path}: parameter {p.name} shape {shape} "
                                  f"!= {p.values.shape}", rd.pos)
        data = np.frombuffer(rd.block(4 * int(np.prod(shape))), dtype="<f4")
        loaded.append((p, bool(locked), data.reshape(shape)))
    if rd.pos != len(raw):
        raise CheckpointError(f"{path}: trailing bytes", rd.pos)
    for p, locked, data in loaded:
        p.values = data.astype(np.float32)
        p.grad = np.zeros_like(p.values)
        p.locked = locked
    return net
