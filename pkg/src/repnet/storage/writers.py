"""
Storage writers

What this module does:
- Atomic, staged file writes for every artifact the CLI produces: binary
  blobs (checkpoints, feature files), Parquet galleries, CSV tables and
  flat ``key=value`` reports.

Atomic pattern (per target file):
1. Write to ``<dir>/.staging/<name>``
2. Move an existing target to ``<dir>/.backup/<name>``
3. Move staging -> target
4. Remove the backup (restored instead if step 3 fails)

Interaction:
- Used by storage codecs (features, manifest, checkpoint, gallery) and by
  pipelines for loss logs, rankings and reports.
"""

from __future__ import annotations

import logging
import shutil
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.parquet as pq

logger = logging.getLogger(__name__)

STAGING_DIR = ".staging"
BACKUP_DIR = ".backup"


class AtomicWriter:
    """Writes one target file through a staging area with backup/restore."""

    def __init__(self, target: Path | str):
        self.target = Path(target)
        self.staging_path = self.target.parent / STAGING_DIR / self.target.name
        self.backup_path = self.target.parent / BACKUP_DIR / self.target.name

    def write(self, produce: Callable[[Path], None]) -> Path:
        """
        Run ``produce(staging_path)`` and move the result into place.

        Parameters
        ----------
        produce : Callable[[Path], None]
            Writes the complete file at the path it is given.

        Returns
        -------
        Path
            The final target path.
        """
        self.staging_path.parent.mkdir(parents=True, exist_ok=True)
        try:
            produce(self.staging_path)
        except BaseException:
            self.staging_path.unlink(missing_ok=True)
            raise

        had_previous = self.target.exists()
        if had_previous:
            self.backup_path.parent.mkdir(parents=True, exist_ok=True)
            shutil.move(str(self.target), str(self.backup_path))
        try:
            shutil.move(str(self.staging_path), str(self.target))
        except BaseException:
            if had_previous:
                shutil.move(str(self.backup_path), str(self.target))
            raise
        if had_previous:
            self.backup_path.unlink(missing_ok=True)
        _remove_if_empty(self.staging_path.parent)
        _remove_if_empty(self.backup_path.parent)
        logger.debug("[write] %s", self.target)
        return self.target


def _remove_if_empty(directory: Path) -> None:
    try:
        directory.rmdir()
    except OSError:
        pass


def write_bytes(path: Path | str, payload: bytes) -> Path:
    return AtomicWriter(path).write(lambda p: p.write_bytes(payload))


def write_text(path: Path | str, text: str) -> Path:
    return AtomicWriter(path).write(lambda p: p.write_text(text, encoding="utf-8"))


def write_parquet(path: Path | str, table: pa.Table) -> Path:
    """zstd-compressed Parquet through the staged write."""
    return AtomicWriter(path).write(
        lambda p: pq.write_table(table, p, row_group_size=10_000, compression="zstd", compression_level=3)
    )


def write_csv(path: Path | str, frame: pd.DataFrame) -> Path:
    """UTF-8 CSV without index; floats use the shortest round-trip repr."""
    return AtomicWriter(path).write(
        lambda p: frame.to_csv(p, index=False, encoding="utf-8", lineterminator="\n")
    )


def format_report(values: Mapping[str, Any]) -> str:
    """Flat ``key=value`` lines in insertion order; floats printed with repr."""
    lines = []
    for key, value in values.items():
        if isinstance(value, (float, np.floating)):
            value = repr(float(value))
        elif isinstance(value, np.integer):
            value = int(value)
        elif value is None:
            value = "none"
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def write_report(path: Path | str, values: Mapping[str, Any]) -> Path:
    return write_text(path, format_report(values))


__all__ = [
    "AtomicWriter",
    "write_bytes",
    "write_text",
    "write_parquet",
    "write_csv",
    "format_report",
    "write_report",
]
