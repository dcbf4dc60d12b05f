"""Versioned, byte-deterministic parameter checkpoints.

Layout (little-endian)::

    4s   magic  b"DAKC"
    u32  format version
    u32  header length H
    H    UTF-8 JSON: {"kind", "config", "tensors": [[name, shape], ...], "extra"}
    f64  tensor payloads in header order
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DAKC"
VERSION = 1
_HEAD = struct.Struct("<4sII")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict[str, np.ndarray], config: dict, kind: str = "model",
                    extra: dict | None = None) -> None:
    names = sorted(params)
    header = json.dumps(
        {"kind": kind, "config": config, "extra": extra or {},
         "tensors": [[n, list(params[n].shape)] for n in names]},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_checkpoint(path, expect: set[str] | None = None):
    """Return ``(params, config, kind, extra)``."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEAD.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, hlen = _HEAD.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {VERSION}")
    try:
        header = json.loads(raw[_HEAD.size:_HEAD.size + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    if not isinstance(header, dict) or not {"kind", "config", "tensors", "extra"} <= set(header):
        raise CheckpointError(f"{path}: header lacks required fields")
    offset = _HEAD.size + hlen
    params = {}
    for name, shape in header["tensors"]:
        n = int(np.prod(shape, dtype=np.int64)) * 8
        if offset + n > len(raw):
            raise CheckpointError(f"{path}: truncated payload at {name!r}")
        params[name] = np.frombuffer(raw, dtype="<f8", count=n // 8, offset=offset).reshape(shape).astype(np.float64)
        offset += n
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    if expect is not None:
        missing = set(expect) - set(params)
        if missing:
            raise CheckpointError(f"{path}: missing parameters {sorted(missing)}")
    return params, header["config"], header["kind"], header["extra"]
