"""
Storage schemas

What this module does:
- Defines the PyArrow schema of gallery files (embedded samples).
- Pins the column layouts of the CSV artifacts (manifest, loss log, rankings)
  so writers and readers agree.

Schemas:
- gallery_schema(...): labels + split + fixed-size list columns for the SLS
  embedding, the ACS feature and both attribute probability vectors.
"""

from __future__ import annotations

from typing import Tuple

import pyarrow as pa

MANIFEST_COLUMNS: Tuple[str, ...] = ("sample_idx", "vehicle_id", "color", "model", "view")
LOSS_LOG_COLUMNS: Tuple[str, ...] = ("iteration", "lr", "triplet_loss", "color_loss", "model_loss", "total")
RANKING_COLUMNS: Tuple[str, ...] = ("query_idx", "rank", "gallery_idx", "distance", "vehicle_id_match")
QUERY_COLUMNS: Tuple[str, ...] = ("query_idx",)
GALLERY_COLUMNS: Tuple[str, ...] = (
    "sample_idx", "vehicle_id", "color", "model", "view", "split", "sls", "acs", "color_probs", "model_probs",
)

SPLITS: Tuple[str, ...] = ("train", "holdout", "all")


def gallery_schema(d_sls: int, d_acs: int, n_colors: int, n_models: int) -> pa.Schema:
    """Gallery table schema; list widths are fixed per file."""
    return pa.schema([
        ("sample_idx", pa.int64()),
        ("vehicle_id", pa.int64()),
        ("color", pa.int64()),
        ("model", pa.int64()),
        ("view", pa.string()),
        ("split", pa.string()),
        ("sls", pa.list_(pa.float64(), d_sls)),
        ("acs", pa.list_(pa.float64(), d_acs)),
        ("color_probs", pa.list_(pa.float64(), n_colors)),
        ("model_probs", pa.list_(pa.float64(), n_models)),
    ])


__all__ = [
    "MANIFEST_COLUMNS",
    "LOSS_LOG_COLUMNS",
    "RANKING_COLUMNS",
    "QUERY_COLUMNS",
    "GALLERY_COLUMNS",
    "SPLITS",
    "gallery_schema",
]
