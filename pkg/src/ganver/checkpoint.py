"""Binary checkpoints: magic ``GVER``, a version byte, a manifest, then float64 payloads.

Layout (all integers little-endian)::

    b"GVER" | u8 version | u32 count
    count x ( u16 name_len | name utf-8 | u32 rows | u32 cols )
    count x ( u64 nbytes | rows*cols float64 <f8 )

Tensor names are ``<net>/<param>``, e.g. ``G/weight-0``.
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .networks import MlpSpec

MAGIC = b"GVER"
VERSION = 1


class CheckpointError(ValueError):
    pass


def flatten(paramsets: dict) -> dict:
    return {f"{net}/{name}": arr for net, params in paramsets.items() for name, arr in params.items()}


def checkpoint_save(paramsets: dict, path) -> None:
    """Write ``{"G": params, "D": params, ...}`` atomically to ``path``."""
    tensors = flatten(paramsets)
    head = [MAGIC, struct.pack("<BI", VERSION, len(tensors))]
    body = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        if arr.ndim != 2:
            raise CheckpointError(f"{name}: expected a 2-D array, got shape {arr.shape}")
        raw = name.encode()
        head.append(struct.pack("<H", len(raw)) + raw + struct.pack("<II", *arr.shape))
        data = arr.tobytes()
        body.append(struct.pack("<Q", len(data)) + data)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(head + body))
    os.replace(tmp, path)


def _reader(buf: bytes, path):
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    def done():
        return pos == len(buf)

    return take, done


def checkpoint_load(path, specs: dict[str, MlpSpec] | None = None) -> dict:
    """Read a checkpoint; with ``specs`` every tensor shape is checked against them."""
    buf = Path(path).read_bytes()
    take, done = _reader(buf, path)
    if take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    version, count = struct.unpack("<BI", take(5))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    manifest = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode()
        rows, cols = struct.unpack("<II", take(8))
        manifest.append((name, rows, cols))
    out: dict = {}
    for name, rows, cols in manifest:
        (nbytes,) = struct.unpack("<Q", take(8))
        if nbytes != rows * cols * 8:
            raise CheckpointError(f"{path}: {name} payload size {nbytes} does not match {rows}x{cols}")
        arr = np.frombuffer(take(nbytes), dtype="<f8").reshape(rows, cols).astype(np.float64)
        net, _, pname = name.partition("/")
        out.setdefault(net, {})[pname] = arr
    if not done():
        raise CheckpointError(f"{path}: trailing bytes after payload")
    if specs is not None:
        for net, spec in specs.items():
            params = out.get(net)
            if params is None:
                raise CheckpointError(f"{path}: missing network {net!r}")
            expected = spec.shapes()
            for pname, shape in expected.items():
                if pname not in params:
                    raise CheckpointError(f"{path}: missing tensor {net}/{pname}")
                if params[pname].shape != shape:
                    raise CheckpointError(
                        f"{path}: shape mismatch for {net}/{pname}: file has {params[pname].shape}, "
                        f"config expects {shape}"
                    )
            extra = set(params) - set(expected)
            if extra:
                raise CheckpointError(f"{path}: unexpected tensors {sorted(extra)} for {net!r}")
    return out
