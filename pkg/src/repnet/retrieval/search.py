"""
Linear and bucket search

Both searches rank by squared Euclidean distance and return a ``RankingList``
ordered by (distance, entry id) ascending:

- ``linear_search`` scans every gallery entry over the concatenated
  (sls | acs) features.
- ``bucket_search`` scans only the four buckets keyed by the query's top-2
  colors x top-2 models, over the sls embedding alone.

With ``exclude_self`` the gallery entry sharing the query's ``sample_idx`` is
dropped before ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..domain.errors import ParamValidationError, ShapeError
from .gallery import Gallery, GalleryEntry
from .index import BucketIndex


@dataclass(frozen=True)
class RankingList:
    """Ranked gallery row positions with their distances."""

    entries: np.ndarray
    distances: np.ndarray
    candidates: int

    def __len__(self) -> int:
        return int(self.entries.shape[0])

    def is_ordered(self) -> bool:
        """Distances non-decreasing, ties by ascending id, no duplicates."""
        if len(np.unique(self.entries)) != len(self):
            return False
        d, e = self.distances, self.entries
        return bool(np.all((d[1:] > d[:-1]) | ((d[1:] == d[:-1]) & (e[1:] > e[:-1]))))


def _check_k(k: int) -> None:
    if k < 1:
        raise ParamValidationError(f"k must be >= 1, got {k}")


def top_k(rows: np.ndarray, distances: np.ndarray, k: int) -> RankingList:
    """Exact top-k of ``rows`` by (distance, row id)."""
    n = rows.shape[0]
    if k < n:
        kth = np.partition(distances, k - 1)[k - 1]
        keep = distances <= kth
        rows, distances = rows[keep], distances[keep]
    order = np.lexsort((rows, distances))[:k]
    return RankingList(entries=rows[order], distances=distances[order], candidates=n)


def _drop_self(rows: np.ndarray, gallery: Gallery, query: GalleryEntry, exclude_self: bool) -> np.ndarray:
    if not exclude_self:
        return rows
    return rows[gallery.sample_idx[rows] != query.sample_idx]


def linear_search(query: GalleryEntry, gallery: Gallery, k: int, *, exclude_self: bool = True) -> RankingList:
    """
    Exhaustive ranking over (sls | acs).

    Raises
    ------
    ParamValidationError
        ``k < 1``.
    ShapeError
        Query feature width differs from the gallery's.
    """
    _check_k(k)
    features = gallery.concat
    q = query.concat
    if q.shape[0] != features.shape[1]:
        raise ShapeError(f"query has {q.shape[0]} features, gallery has {features.shape[1]}")
    distances = np.sum((features - q) ** 2, axis=1)
    rows = np.arange(len(gallery), dtype=np.int64)
    if exclude_self:
        keep = gallery.sample_idx != query.sample_idx
        rows, distances = rows[keep], distances[keep]
    return top_k(rows, distances, k)


def bucket_search(
    query: GalleryEntry,
    index: BucketIndex,
    gallery: Gallery,
    k: int,
    *,
    exclude_self: bool = True,
) -> RankingList:
    """
    Ranking restricted to the query's four candidate buckets, over sls only.

    Entries outside those buckets never appear in the result.
    """
    _check_k(k)
    if query.sls.shape[0] != gallery.sls.shape[1]:
        raise ShapeError(f"query sls has {query.sls.shape[0]} dims, gallery has {gallery.sls.shape[1]}")
    rows = _drop_self(index.candidates(query.color_probs, query.model_probs), gallery, query, exclude_self)
    distances = np.sum((gallery.sls[rows] - query.sls) ** 2, axis=1)
    return top_k(rows, distances, k)


__all__ = ["RankingList", "top_k", "linear_search", "bucket_search"]
