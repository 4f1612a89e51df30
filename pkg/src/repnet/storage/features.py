"""
Feature file codec (RPNF)

Layout, little-endian:
    b"RPNF" | u32 count | u32 dim | count * dim f32 values (row-major)

Values are stored as float32 and widened to float64 on read.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..domain.errors import CheckpointFormatError, ShapeError
from .writers import write_bytes

MAGIC = b"RPNF"
_HEADER = struct.Struct("<4sII")


def encode_features(features: np.ndarray) -> bytes:
    features = np.asarray(features)
    if features.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-D, got shape {features.shape}")
    count, dim = features.shape
    body = np.ascontiguousarray(features, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, count, dim) + body


def decode_features(payload: bytes) -> np.ndarray:
    """
    Parse an RPNF payload.

    Raises
    ------
    CheckpointFormatError
        Bad magic, short header, or body length disagreeing with the header.
    """
    if len(payload) < _HEADER.size:
        raise CheckpointFormatError(f"feature header needs {_HEADER.size} bytes, file has {len(payload)}", offset=len(payload))
    magic, count, dim = _HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    expected = _HEADER.size + 4 * count * dim
    if len(payload) != expected:
        raise CheckpointFormatError(
            f"body holds {len(payload) - _HEADER.size} bytes, header promises {count}x{dim} f32",
            offset=min(len(payload), expected),
        )
    values = np.frombuffer(payload, dtype="<f4", count=count * dim, offset=_HEADER.size)
    return values.reshape(count, dim).astype(np.float64)


def write_features(path: Path | str, features: np.ndarray) -> Path:
    return write_bytes(path, encode_features(features))


def read_features(path: Path | str) -> np.ndarray:
    return decode_features(Path(path).read_bytes())


__all__ = ["MAGIC", "encode_features", "decode_features", "write_features", "read_features"]
