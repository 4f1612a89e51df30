"""
Retrieval metrics

- precision@k = (1/k) * sum_{i<=k} [r_i == r_q]; rankings shorter than k
  count the missing positions as misses.
- AP = (1/T) * sum_{k=1..N} [r_k == r_q] * precision@k, with T the number of
  gallery items sharing the query's vehicle id (the query itself excluded).
- MAP = mean AP over queries with T >= 1; queries with T = 0 are skipped and
  counted.
"""

from __future__ import annotations

import logging
from typing import Dict, NamedTuple, Sequence

import numpy as np

from ..domain.errors import ParamValidationError

logger = logging.getLogger(__name__)


def hits(ranked_labels: Sequence[int], query_label: int) -> np.ndarray:
    """0/1 relevance of each ranked item."""
    return (np.asarray(ranked_labels) == query_label).astype(np.int64)


def _precision_from_hits(rel: np.ndarray, k: int) -> float:
    if k < 1:
        raise ParamValidationError(f"k must be >= 1, got {k}")
    return float(np.sum(rel[:k])) / k


def precision_at_k(ranked_labels: Sequence[int], query_label: int, k: int) -> float:
    """
    Fraction of the top ``k`` ranked items sharing the query label.

    Examples
    --------
    >>> precision_at_k([7, 3, 7], 7, 3)
    0.6666666666666666
    """
    return _precision_from_hits(hits(ranked_labels, query_label), k)


def average_precision_from_hits(rel: Sequence[int], n_relevant: int) -> float:
    if n_relevant < 1:
        raise ParamValidationError(f"average precision needs T >= 1, got {n_relevant}")
    rel = np.asarray(rel, dtype=np.int64)
    if rel.size == 0:
        return 0.0
    positions = np.arange(1, rel.shape[0] + 1)
    precision = np.cumsum(rel) / positions
    return float(np.sum(precision * rel)) / n_relevant


def average_precision(ranked_labels: Sequence[int], query_label: int, n_relevant: int) -> float:
    return average_precision_from_hits(hits(ranked_labels, query_label), n_relevant)


class MapResult(NamedTuple):
    value: float
    evaluated: int
    excluded: int


def mean_average_precision(hit_lists: Sequence[Sequence[int]], ground_truth_counts: Sequence[int]) -> MapResult:
    """
    MAP over per-query 0/1 hit lists.

    Queries with ``T == 0`` are excluded and counted in ``excluded``. With no
    evaluable query the value is 0.0.
    """
    if len(hit_lists) != len(ground_truth_counts):
        raise ParamValidationError(f"{len(hit_lists)} rankings but {len(ground_truth_counts)} ground-truth counts")
    aps = []
    excluded = 0
    for rel, t in zip(hit_lists, ground_truth_counts):
        if t < 1:
            excluded += 1
            continue
        aps.append(average_precision_from_hits(rel, int(t)))
    if excluded:
        logger.warning("[eval] %d queries without ground truth excluded from MAP", excluded)
    value = float(np.mean(aps)) if aps else 0.0
    return MapResult(value=value, evaluated=len(aps), excluded=excluded)


def precision_curve(hit_lists: Sequence[Sequence[int]], ks: Sequence[int]) -> Dict[int, float]:
    """Mean precision@k over queries for each k."""
    if not hit_lists:
        return {int(k): 0.0 for k in ks}
    arrays = [np.asarray(rel, dtype=np.int64) for rel in hit_lists]
    return {int(k): float(np.mean([_precision_from_hits(rel, int(k)) for rel in arrays])) for k in ks}


__all__ = [
    "hits",
    "precision_at_k",
    "average_precision_from_hits",
    "average_precision",
    "MapResult",
    "mean_average_precision",
    "precision_curve",
]
