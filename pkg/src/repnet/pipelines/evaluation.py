"""
Evaluation workflows

What this module does:
- Builds galleries from a trained network over the run's train/hold-out
  split, optionally with ground-truth attribute probabilities for training
  rows (their labels are known, so bucketing needs no prediction).
- Runs queries in either search mode and turns the rankings into the CSV
  layout ``query_idx,rank,gallery_idx,distance,vehicle_id_match``.
- Scores ranking tables: MAP over the full-length ranking in the table's
  search mode (T from the gallery labels), and mean precision@k of the
  table's top k. ``query --with-eval`` and ``eval`` both go
  through ``evaluate_rankings`` so they report the same numbers.
- Attribute accuracy and the F_SLS-1 / F_SLS-2 canonical correlation of a
  trained network.

Ids in ranking tables are ``sample_idx`` values, never gallery rows, so a
table stays valid for any gallery holding the same samples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd

from ..analysis.cca import CcaReport, cca_first_correlation
from ..config import RepNetConfig, RunConfig
from ..domain.errors import DatasetValidationError, ParamValidationError, TableFormatError
from ..domain.models import Dataset
from ..network import RepNetParams, forward, predict_attributes
from ..retrieval.gallery import Gallery, embed_dataset, one_hot
from ..retrieval.index import BucketIndex, build_bucket_index
from ..retrieval.metrics import hits, mean_average_precision, precision_curve
from ..retrieval.queries import select_queries
from ..retrieval.search import RankingList, bucket_search, linear_search
from ..storage.schema import QUERY_COLUMNS, RANKING_COLUMNS, SPLITS
from ..storage.writers import write_csv
from .training import split_for_run

logger = logging.getLogger(__name__)

SEARCH_MODES = ("linear", "bucket")
_RANKING_DTYPES = {"query_idx": "int64", "rank": "int64", "gallery_idx": "int64", "distance": "float64", "vehicle_id_match": "int64"}


class AttributeAccuracy(NamedTuple):
    color: float
    model: float


def attribute_accuracy(params: RepNetParams, config: RepNetConfig, dataset: Dataset) -> AttributeAccuracy:
    """Top-1 color and model accuracy of the attribute heads."""
    if len(dataset) == 0:
        raise DatasetValidationError("attribute accuracy needs at least one sample")
    colors, models = predict_attributes(params, config, dataset.features)
    return AttributeAccuracy(
        color=float(np.mean(colors == dataset.colors)),
        model=float(np.mean(models == dataset.models)),
    )


def adopt_checkpoint(run_config: RunConfig, model: RepNetConfig, dataset: Dataset) -> RunConfig:
    """Run config whose model section is the checkpoint's and whose data shape is the dataset's."""
    return run_config.with_overrides({
        "model": model.model_dump(mode="json"),
        "data": {
            "feature_dim": dataset.feature_dim,
            "n_colors": dataset.n_colors,
            "n_models": dataset.n_models,
        },
    })


def build_gallery(
    params: RepNetParams,
    run_config: RunConfig,
    dataset: Dataset,
    split: str = "all",
    *,
    true_attributes: bool = False,
) -> Gallery:
    """
    Embed one split ("train", "holdout" or "all") of ``dataset``.

    Rows keep their split label. With ``true_attributes`` the rows labelled
    "train" carry one-hot ground-truth attribute probabilities.
    """
    if split not in SPLITS:
        raise ParamValidationError(f"split must be one of {SPLITS}, got {split!r}")
    cfg = run_config.model
    _, holdout = split_for_run(dataset, run_config)
    held = np.isin(dataset.sample_idx, holdout.sample_idx)
    labels = np.where(held, "holdout", "train").astype(object)
    if split != "all":
        rows = np.flatnonzero(labels == split)
        dataset, labels = dataset.subset(rows), labels[rows]

    gallery = embed_dataset(params, cfg, dataset, list(labels))
    if true_attributes:
        known = labels == "train"
        color_probs = gallery.color_probs.copy()
        model_probs = gallery.model_probs.copy()
        color_probs[known] = one_hot(gallery.colors[known], cfg.n_colors)
        model_probs[known] = one_hot(gallery.models[known], cfg.n_models)
        gallery = replace(gallery, color_probs=color_probs, model_probs=model_probs, _concat=None)
        logger.info("[embed] %d training rows use ground-truth attributes", int(known.sum()))
    return gallery


def search_queries(
    gallery: Gallery,
    query_rows: Sequence[int],
    k: int,
    search: str = "linear",
    *,
    exclude_self: bool = True,
    index: Optional[BucketIndex] = None,
) -> List[RankingList]:
    """Rank the gallery for each query row with the chosen search mode."""
    if search not in SEARCH_MODES:
        raise ParamValidationError(f"search must be one of {SEARCH_MODES}, got {search!r}")
    if search == "bucket" and index is None:
        index = build_bucket_index(gallery)
    results = []
    for row in query_rows:
        query = gallery.entry(int(row))
        if search == "linear":
            results.append(linear_search(query, gallery, k, exclude_self=exclude_self))
        else:
            results.append(bucket_search(query, index, gallery, k, exclude_self=exclude_self))
    return results


def rankings_frame(gallery: Gallery, query_rows: Sequence[int], results: Sequence[RankingList]) -> pd.DataFrame:
    """Flatten rankings into the ranking CSV layout (ranks start at 1)."""
    records = []
    for row, result in zip(query_rows, results):
        q_idx = int(gallery.sample_idx[int(row)])
        q_vid = int(gallery.vehicle_ids[int(row)])
        for rank, (entry, dist) in enumerate(zip(result.entries.tolist(), result.distances.tolist()), start=1):
            records.append((q_idx, rank, int(gallery.sample_idx[entry]), float(dist), int(gallery.vehicle_ids[entry] == q_vid)))
    frame = pd.DataFrame(records, columns=list(RANKING_COLUMNS))
    return frame.astype(_RANKING_DTYPES)


def _check_columns(frame: pd.DataFrame, expected: Sequence[str], what: str) -> None:
    if tuple(frame.columns) != tuple(expected):
        raise DatasetValidationError(f"{what} header must be {','.join(expected)}, got {','.join(map(str, frame.columns))}")


def _read_csv_table(path: Path | str, columns: Sequence[str], what: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise TableFormatError(f"{path}: cannot parse {what} CSV: {_first_line(exc)}") from None
    if tuple(frame.columns) != tuple(columns):
        raise TableFormatError(f"{path}: {what} header must be {','.join(columns)}, got {','.join(map(str, frame.columns))}")
    return frame


def _first_line(exc: BaseException) -> str:
    text = str(exc).strip()
    return text.splitlines()[0] if text else type(exc).__name__


def read_rankings(path: Path | str) -> pd.DataFrame:
    """
    Load a ranking CSV.

    Raises
    ------
    TableFormatError
        Unparseable file, wrong header, or a non-numeric cell.
    """
    frame = _read_csv_table(path, RANKING_COLUMNS, "rankings")
    try:
        return frame.astype(_RANKING_DTYPES)
    except (TypeError, ValueError) as exc:
        raise TableFormatError(f"{path}: rankings hold a non-numeric value: {_first_line(exc)}") from None


def write_queries(path: Path | str, gallery: Gallery, query_rows: Sequence[int]) -> Path:
    sample_ids = gallery.sample_idx[np.asarray(query_rows, dtype=np.int64)]
    return write_csv(path, pd.DataFrame({"query_idx": sample_ids.astype(np.int64)}))


def read_queries(path: Path | str) -> np.ndarray:
    """Query ``sample_idx`` values listed in a query CSV."""
    frame = _read_csv_table(path, QUERY_COLUMNS, "queries")
    try:
        return frame["query_idx"].astype("int64").to_numpy()
    except (TypeError, ValueError) as exc:
        raise TableFormatError(f"{path}: query ids must be integers: {_first_line(exc)}") from None


@dataclass(frozen=True)
class EvalReport:
    map: float
    queries: int
    evaluated: int
    excluded: int
    precision: Dict[int, float] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, float]:
        out: Dict[str, float] = {
            "map": self.map,
            "queries": self.queries,
            "evaluated": self.evaluated,
            "excluded": self.excluded,
        }
        out.update({f"p@{k}": v for k, v in self.precision.items()})
        return out


def evaluate_rankings(
    frame: pd.DataFrame,
    gallery: Gallery,
    ks: Sequence[int],
    *,
    query_idx: Optional[Sequence[int]] = None,
    exclude_self: bool = True,
    search: Optional[str] = None,
    index: Optional[BucketIndex] = None,
) -> EvalReport:
    """
    MAP and precision@k of a ranking table.

    Parameters
    ----------
    frame : pd.DataFrame
        Ranking table (``RANKING_COLUMNS``); precision@k is read from it.
    gallery : Gallery
        Gallery the rankings were computed on; supplies query labels and T.
    query_idx : Sequence[int], optional
        Queries to score. Defaults to every query in ``frame``; listed queries
        without ranking rows count as empty rankings.
    exclude_self : bool
        Whether the query itself was excluded from its ranking (T drops by 1).
    search : str, optional
        Search mode that produced ``frame``. When given, MAP comes from a
        full-length ranking of the gallery in that mode, so matches beyond
        the table's top k still count. Without it MAP is taken over the
        table's rows as they stand.
    """
    _check_columns(frame, RANKING_COLUMNS, "rankings")
    if query_idx is None:
        query_idx = sorted(set(frame["query_idx"].astype(np.int64).tolist()))
    query_idx = sorted(int(q) for q in query_idx)
    query_rows = gallery.rows_by_sample_idx(query_idx)
    labels = gallery.vehicle_ids[query_rows]
    ids, counts = np.unique(gallery.vehicle_ids, return_counts=True)
    per_id = dict(zip(ids.tolist(), counts.tolist()))
    truth = [per_id[int(v)] - (1 if exclude_self else 0) for v in labels]

    grouped = {
        int(q): g.sort_values("rank", kind="stable")["vehicle_id_match"].to_numpy(dtype=np.int64)
        for q, g in frame.groupby("query_idx", sort=True)
    }
    hit_lists = [grouped.get(q, np.zeros(0, dtype=np.int64)) for q in query_idx]
    if search is None:
        full_lists = hit_lists
    else:
        full = search_queries(gallery, query_rows, max(1, len(gallery)), search, exclude_self=exclude_self, index=index)
        full_lists = [hits(gallery.vehicle_ids[r.entries], int(v)) for r, v in zip(full, labels)]
    result = mean_average_precision(full_lists, truth)
    report = EvalReport(
        map=result.value,
        queries=len(query_idx),
        evaluated=result.evaluated,
        excluded=result.excluded,
        precision=precision_curve(hit_lists, ks),
    )
    logger.info("[eval] MAP %.6f over %d queries", report.map, report.evaluated)
    return report


@dataclass(frozen=True)
class CheckpointEvaluation:
    report: EvalReport
    accuracy: AttributeAccuracy
    rankings: pd.DataFrame

    def as_dict(self) -> Dict[str, float]:
        out = self.report.as_dict()
        out["color_accuracy"] = self.accuracy.color
        out["model_accuracy"] = self.accuracy.model
        return out


def evaluate_checkpoint(
    params: RepNetParams,
    run_config: RunConfig,
    dataset: Dataset,
    *,
    search: Optional[str] = None,
) -> CheckpointEvaluation:
    """
    Retrieval and attribute evaluation on the hold-out split.

    The hold-out samples form the gallery; queries come from it (self
    excluded per ``retrieval.exclude_self``).
    """
    r = run_config.retrieval
    search = search or r.search
    gallery = build_gallery(params, run_config, dataset, "holdout")
    query_rows = select_queries(gallery, r.query_count, r.query_mode, run_config.model.seed)
    index = build_bucket_index(gallery) if search == "bucket" else None
    results = search_queries(gallery, query_rows, r.k, search, exclude_self=r.exclude_self, index=index)
    frame = rankings_frame(gallery, query_rows, results)
    report = evaluate_rankings(
        frame, gallery, r.precision_ks, exclude_self=r.exclude_self, search=search, index=index
    )
    holdout = dataset.subset(np.flatnonzero(np.isin(dataset.sample_idx, gallery.sample_idx)))
    accuracy = attribute_accuracy(params, run_config.model, holdout)
    logger.info("[eval] %s search: MAP %.4f, color acc %.4f, model acc %.4f", search, report.map, accuracy.color, accuracy.model)
    return CheckpointEvaluation(report=report, accuracy=accuracy, rankings=frame)


def repression_cca(
    params: RepNetParams,
    run_config: RunConfig,
    dataset: Dataset,
    split: Optional[str] = None,
) -> CcaReport:
    """First canonical correlation between F_SLS-1 and F_SLS-2 over one split."""
    a = run_config.analysis
    split = split or a.cca_split
    train, holdout = split_for_run(dataset, run_config)
    if split == "train":
        part = train
    elif split == "holdout":
        part = holdout
    elif split == "all":
        part = dataset
    else:
        raise ParamValidationError(f"CCA split must be one of {SPLITS}, got {split!r}")
    trace = forward(params, run_config.model, part.features)
    logger.info("[cca] %s split, %d samples", split, len(part))
    return cca_first_correlation(trace.f_sls1, trace.f_sls2, a.cca_ridge, max_iter=a.eig_max_iter, tol=a.eig_tol)


__all__ = [
    "SEARCH_MODES",
    "AttributeAccuracy",
    "attribute_accuracy",
    "adopt_checkpoint",
    "build_gallery",
    "search_queries",
    "rankings_frame",
    "read_rankings",
    "write_queries",
    "read_queries",
    "EvalReport",
    "evaluate_rankings",
    "CheckpointEvaluation",
    "evaluate_checkpoint",
    "repression_cca",
]
