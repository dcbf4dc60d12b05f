"""``DAKF`` clip-feature files and segment pooling.

Layout (little-endian)::

    4s   magic   b"DAKF"
    u32  version (1)
    u32  clip count n_c
    u32  width d_t
    f32  n_c * d_t values, row-major
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DAKF"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FeatureFormatError(ValueError):
    pass


def write_features(path, features: np.ndarray) -> None:
    features = np.asarray(features)
    if features.ndim != 2:
        raise FeatureFormatError(f"expected a 2-D clip matrix, got shape {features.shape}")
    n_c, width = features.shape
    if width == 0 or n_c == 0:
        raise FeatureFormatError("clip count and width must be positive")
    payload = np.ascontiguousarray(features, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n_c, width))
        fh.write(payload)


def read_features(path) -> np.ndarray:
    """Return the clip matrix as float32 ``(n_c, d_t)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FeatureFormatError(f"{path}: truncated header")
    magic, version, n_c, width = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FeatureFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FeatureFormatError(f"{path}: unsupported version {version}")
    if n_c == 0 or width == 0:
        raise FeatureFormatError(f"{path}: empty feature matrix ({n_c} x {width})")
    expected = n_c * width * 4
    payload = raw[_HEADER.size:]
    if len(payload) < expected:
        raise FeatureFormatError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise FeatureFormatError(f"{path}: {len(payload) - expected} trailing bytes")
    return np.frombuffer(payload, dtype="<f4").reshape(n_c, width).astype(np.float32)


def segment_bounds(n_clips: int, n_segments: int = 32) -> list[tuple[int, int]]:
    """Clip index range ``[lo, hi)`` pooled into each segment (never empty)."""
    if n_clips < 1 or n_segments < 1:
        raise ValueError("need at least one clip and one segment")
    bounds = []
    for s in range(n_segments):
        lo = s * n_clips // n_segments
        hi = (s + 1) * n_clips // n_segments
        if hi <= lo:
            lo = min(lo, n_clips - 1)
            hi = lo + 1
        bounds.append((lo, hi))
    return bounds


def segment_pool(clips: np.ndarray, n_segments: int = 32) -> np.ndarray:
    """Average consecutive clips into ``n_segments`` rows (float64)."""
    clips = np.asarray(clips, dtype=np.float64)
    return np.stack([clips[lo:hi].mean(axis=0) for lo, hi in segment_bounds(len(clips), n_segments)])
