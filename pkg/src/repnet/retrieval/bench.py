"""
Search benchmark

What this module does:
- Times linear vs bucket search over the same queries (single-threaded,
  ``time.perf_counter``), reports the speedup, MAP of both full rankings,
  bucket candidate statistics, bucket-confinement violations and the
  same-identity recall of bucket search at full depth.
- ``synthetic_gallery`` builds large galleries with planted bucket structure
  so the engine can be benchmarked without a trained network.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from typing import Dict, List

import numpy as np

from ..domain.errors import ParamValidationError
from .gallery import Gallery, one_hot
from .index import BucketIndex, build_bucket_index
from .metrics import hits, mean_average_precision
from .search import RankingList, bucket_search, linear_search

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchReport:
    gallery_size: int
    queries: int
    k: int
    repetitions: int
    linear_mean_s: float
    bucket_mean_s: float
    speedup: float
    map_linear: float
    map_bucket: float
    candidates_mean: float
    candidates_min: int
    candidates_max: int
    bucket_violations: int
    same_id_recall_full: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def ground_truth_counts(gallery: Gallery, query_rows: np.ndarray, exclude_self: bool = True) -> np.ndarray:
    """T per query: gallery entries sharing its vehicle id, minus itself when excluded."""
    ids, counts = np.unique(gallery.vehicle_ids, return_counts=True)
    lookup = dict(zip(ids.tolist(), counts.tolist()))
    t = np.asarray([lookup[int(gallery.vehicle_ids[r])] for r in query_rows], dtype=np.int64)
    return t - 1 if exclude_self else t


def _through_last_hit(rel: np.ndarray) -> np.ndarray:
    """Hit list cut after its last hit; trailing misses add nothing to AP."""
    found = np.flatnonzero(rel)
    return rel[: found[-1] + 1] if found.size else rel[:0]


def _timed(run) -> tuple:
    start = time.perf_counter()
    result = run()
    return result, time.perf_counter() - start


def bench(
    gallery: Gallery,
    query_rows: np.ndarray,
    k: int,
    repetitions: int = 3,
    *,
    index: BucketIndex | None = None,
) -> BenchReport:
    """
    Benchmark both search modes on queries drawn from ``gallery`` (self excluded).

    Parameters
    ----------
    query_rows : np.ndarray
        Gallery row positions used as queries.
    index : BucketIndex, optional
        Prebuilt (warm) index; built here when omitted, outside the timing.
    """
    if repetitions < 1:
        raise ParamValidationError(f"repetitions must be >= 1, got {repetitions}")
    if index is None:
        index = build_bucket_index(gallery)
    queries = [gallery.entry(int(r)) for r in query_rows]
    gallery.concat  # build the concatenated matrix before timing

    linear_total = bucket_total = 0.0
    linear_results: List[RankingList] = []
    bucket_results: List[RankingList] = []
    for _ in range(repetitions):
        linear_results, elapsed = _timed(lambda: [linear_search(q, gallery, k) for q in queries])
        linear_total += elapsed
        bucket_results, elapsed = _timed(lambda: [bucket_search(q, index, gallery, k) for q in queries])
        bucket_total += elapsed

    n_calls = max(1, repetitions * len(queries))
    linear_mean = linear_total / n_calls
    bucket_mean = bucket_total / n_calls

    violations = 0
    candidate_counts = []
    recalls = []
    linear_hits = []
    bucket_hits = []
    depth = max(1, len(gallery))
    for q, result in zip(queries, bucket_results):
        allowed = set(index.candidates(q.color_probs, q.model_probs).tolist())
        violations += sum(1 for e in result.entries.tolist() if e not in allowed)
        full = bucket_search(q, index, gallery, depth)
        bucket_hits.append(_through_last_hit(hits(gallery.vehicle_ids[full.entries], q.vehicle_id)))
        linear_hits.append(_through_last_hit(hits(gallery.vehicle_ids[linear_search(q, gallery, depth).entries], q.vehicle_id)))
        candidate_counts.append(full.candidates)
        same = int(np.sum(gallery.vehicle_ids == q.vehicle_id)) - 1
        if same > 0:
            recalls.append(int(np.sum(gallery.vehicle_ids[full.entries] == q.vehicle_id)) / same)

    # MAP over the full rankings; the timed runs only keep the top k
    t = ground_truth_counts(gallery, query_rows)
    map_linear = mean_average_precision(linear_hits, t).value
    map_bucket = mean_average_precision(bucket_hits, t).value

    counts = np.asarray(candidate_counts) if candidate_counts else np.zeros(1, dtype=np.int64)
    report = BenchReport(
        gallery_size=len(gallery),
        queries=len(queries),
        k=k,
        repetitions=repetitions,
        linear_mean_s=linear_mean,
        bucket_mean_s=bucket_mean,
        speedup=linear_mean / bucket_mean if bucket_mean > 0 else float("inf"),
        map_linear=map_linear,
        map_bucket=map_bucket,
        candidates_mean=float(counts.mean()),
        candidates_min=int(counts.min()),
        candidates_max=int(counts.max()),
        bucket_violations=violations,
        same_id_recall_full=float(np.mean(recalls)) if recalls else 1.0,
    )
    logger.info(
        "[bench] linear %.3gs, bucket %.3gs per query (x%.1f), %.1f candidates",
        linear_mean, bucket_mean, report.speedup, report.candidates_mean,
    )
    return report


def synthetic_gallery(
    size: int,
    *,
    n_colors: int = 7,
    n_models: int = 250,
    d_sls: int = 32,
    d_acs: int = 64,
    entries_per_id: int = 4,
    noise_sigma: float = 0.1,
    seed: int = 0,
) -> Gallery:
    """
    Gallery with identities spread uniformly over color x model buckets.

    Probabilities are one-hot truths, so bucket membership equals the true
    label partition. SLS rows are unit-normalised identity prototypes plus
    noise; ACS rows are attribute prototypes plus noise.
    """
    if size < 1 or entries_per_id < 1:
        raise ParamValidationError("gallery size and entries_per_id must be >= 1")
    rng = np.random.default_rng([seed, 4])
    n_ids = -(-size // entries_per_id)
    id_color = rng.integers(n_colors, size=n_ids)
    id_model = rng.integers(n_models, size=n_ids)
    vehicle_ids = np.repeat(np.arange(n_ids), entries_per_id)[:size]

    id_proto = rng.normal(size=(n_ids, d_sls))
    sls = id_proto[vehicle_ids] + noise_sigma * rng.normal(size=(size, d_sls))
    sls /= np.linalg.norm(sls, axis=1, keepdims=True)

    color_proto = rng.normal(size=(n_colors, d_acs))
    model_proto = rng.normal(size=(n_models, d_acs))
    colors = id_color[vehicle_ids]
    models = id_model[vehicle_ids]
    acs = color_proto[colors] + model_proto[models] + noise_sigma * rng.normal(size=(size, d_acs))

    return Gallery(
        sample_idx=np.arange(size, dtype=np.int64),
        vehicle_ids=vehicle_ids.astype(np.int64),
        colors=colors.astype(np.int64),
        models=models.astype(np.int64),
        views=np.zeros(size, dtype=np.int64),
        splits=np.asarray(["all"] * size, dtype=object),
        sls=sls,
        acs=acs,
        color_probs=one_hot(colors, n_colors),
        model_probs=one_hot(models, n_models),
    ).validate()


__all__ = ["BenchReport", "ground_truth_counts", "bench", "synthetic_gallery"]
