"""
Attribute bucket index

Every gallery entry goes into exactly one bucket keyed by
(argmax color_probs, argmax model_probs); ties go to the lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Dict, List, Tuple

import numpy as np

from .gallery import Gallery

BucketKey = Tuple[int, int]


@dataclass(frozen=True)
class BucketIndex:
    """(color, model) -> ascending gallery row positions."""

    buckets: Dict[BucketKey, np.ndarray]
    n_colors: int
    n_models: int

    def __len__(self) -> int:
        return sum(rows.shape[0] for rows in self.buckets.values())

    def sizes(self) -> Dict[BucketKey, int]:
        return {key: int(rows.shape[0]) for key, rows in sorted(self.buckets.items())}

    def candidate_keys(self, color_probs: np.ndarray, model_probs: np.ndarray) -> List[BucketKey]:
        """Keys for the top-2 colors x top-2 models (all classes when fewer than 2 exist)."""
        colors = _top_two(color_probs)
        models = _top_two(model_probs)
        return list(product(colors, models))

    def candidates(self, color_probs: np.ndarray, model_probs: np.ndarray) -> np.ndarray:
        """Union of the candidate buckets, ascending row positions."""
        parts = [self.buckets[k] for k in self.candidate_keys(color_probs, model_probs) if k in self.buckets]
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(parts))


def _top_two(probs: np.ndarray) -> List[int]:
    order = np.argsort(-np.asarray(probs), kind="stable")
    return [int(c) for c in order[:2]]


def build_bucket_index(gallery: Gallery) -> BucketIndex:
    """Partition the gallery by predicted (color, model); empty gallery -> empty index."""
    n_colors = gallery.color_probs.shape[1]
    n_models = gallery.model_probs.shape[1]
    if len(gallery) == 0:
        return BucketIndex(buckets={}, n_colors=n_colors, n_models=n_models)
    colors = np.argmax(gallery.color_probs, axis=1)
    models = np.argmax(gallery.model_probs, axis=1)
    keys = colors * n_models + models
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    bounds = np.flatnonzero(np.diff(sorted_keys)) + 1
    buckets: Dict[BucketKey, np.ndarray] = {}
    for chunk in np.split(order, bounds):
        key = int(keys[chunk[0]])
        buckets[(key // n_models, key % n_models)] = chunk.astype(np.int64)
    return BucketIndex(buckets=buckets, n_colors=n_colors, n_models=n_models)


def bucket_stats(index: BucketIndex) -> Dict[str, float]:
    """Summary numbers for the ``index`` report."""
    sizes = np.asarray(list(index.sizes().values()), dtype=np.int64)
    total = int(sizes.sum()) if sizes.size else 0
    return {
        "entries": total,
        "buckets_used": int(sizes.size),
        "buckets_possible": index.n_colors * index.n_models,
        "min_bucket": int(sizes.min()) if sizes.size else 0,
        "max_bucket": int(sizes.max()) if sizes.size else 0,
        "mean_bucket": float(sizes.mean()) if sizes.size else 0.0,
    }


__all__ = ["BucketKey", "BucketIndex", "build_bucket_index", "bucket_stats"]
