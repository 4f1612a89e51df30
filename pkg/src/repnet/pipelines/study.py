"""
Repression study

Trains one network per (seed, repression kind) on identical data, with an
identical seed, and tabulates per run:

- CCA correlation between F_SLS-1 and F_SLS-2 (and its p-value)
- hold-out color/model accuracy
- linear and bucket MAP on the hold-out gallery
- mean triplet loss over the first and last logged steps

A lower correlation means the repression layer rewrites more of F_SLS-1;
``repression_wins`` counts the seeds on which one kind beats another.
"""

from __future__ import annotations

import logging
from typing import Iterable, Optional, Sequence

import pandas as pd

from ..config import RunConfig
from ..data.synthetic import generate_synthetic
from ..domain.errors import ParamValidationError
from ..domain.models import Dataset, RepressionKind
from .evaluation import evaluate_checkpoint, repression_cca
from .training import train_model

logger = logging.getLogger(__name__)

STUDY_COLUMNS = (
    "seed",
    "rep_kind",
    "cca_correlation",
    "cca_p_value",
    "color_accuracy",
    "model_accuracy",
    "map_linear",
    "map_bucket",
    "initial_triplet",
    "final_triplet",
)


def run_repression_study(
    run_config: RunConfig,
    kinds: Sequence[RepressionKind],
    seeds: Iterable[int],
    *,
    dataset: Optional[Dataset] = None,
) -> pd.DataFrame:
    """
    One row per (seed, kind), seeds outer, kinds in the order given.

    Parameters
    ----------
    dataset : Dataset, optional
        Shared dataset for every run. When omitted each seed generates its own
        from ``run_config.data`` with that seed.
    """
    kinds = [RepressionKind(k) for k in kinds]
    seeds = [int(s) for s in seeds]
    if not kinds or not seeds:
        raise ParamValidationError("study needs at least one repression kind and one seed")

    rows = []
    for seed in seeds:
        data = dataset if dataset is not None else generate_synthetic(run_config.data, seed)
        for kind in kinds:
            cfg = run_config.with_overrides({"model": {"rep_kind": kind.value, "seed": seed}})
            result = train_model(cfg, data)
            cca = repression_cca(result.params, cfg, data)
            linear = evaluate_checkpoint(result.params, cfg, data, search="linear")
            bucket = evaluate_checkpoint(result.params, cfg, data, search="bucket")
            rows.append((
                seed,
                kind.value,
                cca.correlation,
                cca.p_value,
                linear.accuracy.color,
                linear.accuracy.model,
                linear.report.map,
                bucket.report.map,
                result.initial_triplet,
                result.final_triplet,
            ))
            logger.info("[study] seed %d %s: cca %.6f, MAP %.4f / %.4f", seed, kind.value, cca.correlation, linear.report.map, bucket.report.map)
    return pd.DataFrame(rows, columns=list(STUDY_COLUMNS))


def repression_wins(frame: pd.DataFrame, kind: RepressionKind, baseline: RepressionKind) -> int:
    """Seeds on which ``kind`` has a strictly lower CCA correlation than ``baseline``."""
    table = frame.pivot(index="seed", columns="rep_kind", values="cca_correlation")
    return int((table[RepressionKind(kind).value] < table[RepressionKind(baseline).value]).sum())


__all__ = ["STUDY_COLUMNS", "run_repression_study", "repression_wins"]
