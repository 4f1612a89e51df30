"""
Query selection

Only identities with >= 2 gallery entries can be queried, so every query
keeps at least one ground-truth match after self-exclusion.

- random: shuffle the eligible identities, take ``count`` of them and one
  random entry each
- tough: the ``count`` identities with the most gallery entries (ties by
  lower vehicle id), first entry of each
"""

from __future__ import annotations

import logging
from typing import Dict, List

import numpy as np

from ..domain.errors import DatasetValidationError, ParamValidationError
from .gallery import Gallery

logger = logging.getLogger(__name__)

QUERY_MODES = ("random", "tough")


def _rows_by_identity(gallery: Gallery) -> Dict[int, List[int]]:
    groups: Dict[int, List[int]] = {}
    for row, vid in enumerate(gallery.vehicle_ids.tolist()):
        groups.setdefault(int(vid), []).append(row)
    return groups


def select_queries(gallery: Gallery, count: int, mode: str = "random", seed: int = 0) -> np.ndarray:
    """
    Pick query rows from ``gallery``, at most one per identity.

    Returns
    -------
    np.ndarray
        Ascending gallery row positions (fewer than ``count`` when not
        enough identities qualify).
    """
    if mode not in QUERY_MODES:
        raise ParamValidationError(f"query mode must be one of {QUERY_MODES}, got {mode!r}")
    if count < 1:
        raise ParamValidationError(f"query count must be >= 1, got {count}")
    groups = {vid: rows for vid, rows in _rows_by_identity(gallery).items() if len(rows) >= 2}
    if not groups:
        raise DatasetValidationError("no identity has 2 or more gallery entries; nothing to query")

    if mode == "random":
        rng = np.random.default_rng([seed, 3])
        ids = sorted(groups)
        chosen = [ids[i] for i in rng.permutation(len(ids))[:count]]
        rows = [groups[vid][int(rng.integers(len(groups[vid])))] for vid in chosen]
    else:
        ranked = sorted(groups, key=lambda vid: (-len(groups[vid]), vid))[:count]
        rows = [groups[vid][0] for vid in ranked]
    if len(rows) < count:
        logger.warning("[query] only %d eligible identities for %d requested queries", len(rows), count)
    return np.asarray(sorted(rows), dtype=np.int64)


__all__ = ["QUERY_MODES", "select_queries"]
