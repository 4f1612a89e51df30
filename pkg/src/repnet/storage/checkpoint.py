"""
Checkpoint codec (RPNC)

Layout, little-endian:
    b"RPNC" | u32 version (=1) | u32 layer count
    4 tables in order: weights, biases, weight momentum, bias momentum
        per layer: u16 name length | UTF-8 name | u32 rows | u32 cols | rows*cols f64
        (bias vectors are stored as 1 x len)
    u32 config length | UTF-8 JSON of the network config
    u32 CRC-32 of every preceding byte

Round trips are bit-exact. Errors carry the byte offset where parsing failed.
"""

from __future__ import annotations

import json
import logging
import struct
import zlib
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from ..config import RepNetConfig
from ..domain.errors import CheckpointFormatError
from ..network import RepNetParams
from .writers import write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"RPNC"
VERSION = 1

_HEADER = struct.Struct("<4sII")
_NAME_LEN = struct.Struct("<H")
_DIMS = struct.Struct("<II")
_U32 = struct.Struct("<I")


def _pack_table(parts: List[bytes], table: Dict[str, np.ndarray], names: List[str]) -> None:
    for name in names:
        arr = np.asarray(table[name], dtype=np.float64)
        matrix = arr.reshape(1, -1) if arr.ndim == 1 else arr
        encoded = name.encode("utf-8")
        parts.append(_NAME_LEN.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_DIMS.pack(*matrix.shape))
        parts.append(np.ascontiguousarray(matrix, dtype="<f8").tobytes())


def encode_checkpoint(params: RepNetParams, config: RepNetConfig) -> bytes:
    names = params.layer_names
    parts: List[bytes] = [_HEADER.pack(MAGIC, VERSION, len(names))]
    for table in (params.weights, params.biases, params.weight_momentum, params.bias_momentum):
        _pack_table(parts, table, names)
    config_json = json.dumps(config.model_dump(mode="json"), sort_keys=True).encode("utf-8")
    parts.append(_U32.pack(len(config_json)))
    parts.append(config_json)
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


class _Reader:
    def __init__(self, payload: bytes, end: int):
        self.payload = payload
        self.end = end
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > self.end:
            raise CheckpointFormatError(f"truncated while reading {what}", offset=self.offset)
        chunk = self.payload[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: struct.Struct, what: str) -> Tuple:
        return fmt.unpack(self.take(fmt.size, what))


def _read_table(reader: _Reader, count: int, label: str, vector: bool) -> Dict[str, np.ndarray]:
    table: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack(_NAME_LEN, f"{label} name length")
        start = reader.offset
        try:
            name = reader.take(name_len, f"{label} name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointFormatError(f"{label} name is not UTF-8", offset=start) from None
        rows, cols = reader.unpack(_DIMS, f"{label} {name} dims")
        raw = reader.take(8 * rows * cols, f"{label} {name} values")
        matrix = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(rows, cols)
        if name in table:
            raise CheckpointFormatError(f"duplicate {label} entry {name!r}", offset=start)
        table[name] = matrix.reshape(-1) if vector else matrix
    return table


def decode_checkpoint(payload: bytes) -> Tuple[RepNetParams, RepNetConfig]:
    """
    Parse an RPNC payload into parameters and the embedded config.

    Raises
    ------
    CheckpointFormatError
        Bad magic/version, CRC mismatch, truncation or an unreadable config block.
    ShapeError
        Stored tables disagree with the embedded config (names the layer).
    """
    if len(payload) < _HEADER.size + _U32.size:
        raise CheckpointFormatError(f"file too short ({len(payload)} bytes)", offset=len(payload))
    magic, version, count = _HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported version {version}, expected {VERSION}", offset=4)
    crc_offset = len(payload) - _U32.size
    (stored_crc,) = _U32.unpack_from(payload, crc_offset)
    actual_crc = zlib.crc32(payload[:crc_offset])
    if stored_crc != actual_crc:
        raise CheckpointFormatError(
            f"CRC mismatch (stored {stored_crc:#010x}, computed {actual_crc:#010x}); file corrupt or truncated",
            offset=crc_offset,
        )

    reader = _Reader(payload, crc_offset)
    reader.offset = _HEADER.size
    weights = _read_table(reader, count, "weight", vector=False)
    biases = _read_table(reader, count, "bias", vector=True)
    weight_momentum = _read_table(reader, count, "weight momentum", vector=False)
    bias_momentum = _read_table(reader, count, "bias momentum", vector=True)

    (config_len,) = reader.unpack(_U32, "config length")
    config_start = reader.offset
    raw_config = reader.take(config_len, "config")
    try:
        config = RepNetConfig.model_validate(json.loads(raw_config.decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError, ValidationError) as exc:
        raise CheckpointFormatError(f"unreadable config block: {exc}", offset=config_start) from None
    if reader.offset != crc_offset:
        raise CheckpointFormatError(f"{crc_offset - reader.offset} trailing bytes before CRC", offset=reader.offset)

    params = RepNetParams(
        weights=weights,
        biases=biases,
        weight_momentum=weight_momentum,
        bias_momentum=bias_momentum,
    )
    return params.validate(config), config


def save_checkpoint(params: RepNetParams, config: RepNetConfig, path: Path | str) -> Path:
    params.validate(config)
    target = write_bytes(path, encode_checkpoint(params, config))
    logger.info("[checkpoint] saved %d layers to %s", len(params.layer_names), target)
    return target


def load_checkpoint(
    path: Path | str, expected: Optional[RepNetConfig] = None
) -> Tuple[RepNetParams, RepNetConfig]:
    """
    Load ``(params, config)``; optionally check shapes against ``expected``.

    Raises
    ------
    ShapeError
        A stored layer does not fit ``expected`` (message names the layer).
    """
    params, config = decode_checkpoint(Path(path).read_bytes())
    if expected is not None:
        params.validate(expected)
    return params, config


__all__ = [
    "MAGIC",
    "VERSION",
    "encode_checkpoint",
    "decode_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]
