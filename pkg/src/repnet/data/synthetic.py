"""
Synthetic labelled dataset

Each raw feature vector is the sum of four parts:
    [color prototype | model prototype | identity detail] + view offset + noise

- The color and model blocks each take ``feature_dim // 4`` dimensions; the
  identity block takes the rest.
- Every identity gets one color, one model and one view (alternating within
  a (color, model) cell), so the identity determines all three.
- Samples are ordered by color, then model, then identity, then sample.

``split_holdout`` keeps part of each identity's samples for evaluation.
"""

from __future__ import annotations

import logging
from typing import Tuple

import numpy as np

from ..config import DataSpec
from ..domain.errors import SpecError
from ..domain.models import Dataset

logger = logging.getLogger(__name__)


def _check_spec(spec: DataSpec) -> None:
    counts = {
        "n_colors": spec.n_colors,
        "n_models": spec.n_models,
        "ids_per_combo": spec.ids_per_combo,
        "samples_per_id": spec.samples_per_id,
    }
    for name, value in counts.items():
        if value < 1:
            raise SpecError(f"{name} must be >= 1, got {value}")
    if spec.feature_dim < 4:
        raise SpecError(
            f"feature_dim {spec.feature_dim} cannot host color, model and identity blocks (need >= 4)"
        )
    if spec.noise_sigma < 0:
        raise SpecError(f"noise_sigma must be >= 0, got {spec.noise_sigma}")
    if not 0.0 <= spec.holdout_fraction < 1.0:
        raise SpecError(f"holdout_fraction must lie in [0, 1), got {spec.holdout_fraction}")


def _prototypes(rng: np.random.Generator, count: int, width: int, signal: float) -> np.ndarray:
    # per-entry scale keeps the expected prototype norm at ``signal``
    return rng.normal(size=(count, width)) * (signal / np.sqrt(width))


def generate_synthetic(spec: DataSpec, seed: int) -> Dataset:
    """
    Generate a dataset with planted attribute and identity structure.

    Parameters
    ----------
    spec : DataSpec
        Class counts, sizes and signal/noise scales.
    seed : int
        Same seed and spec give byte-identical output.

    Returns
    -------
    Dataset
        ``n_colors * n_models * ids_per_combo * samples_per_id`` samples.

    Raises
    ------
    SpecError
        Zero counts, a feature_dim below 4, negative noise.

    Examples
    --------
    >>> ds = generate_synthetic(DataSpec(), seed=0)
    >>> len(ds), len(np.unique(ds.vehicle_ids))
    (480, 48)
    """
    _check_spec(spec)
    rng = np.random.default_rng([seed, 1])
    d = spec.feature_dim
    color_w = model_w = d // 4
    id_w = d - color_w - model_w
    n_ids = spec.n_colors * spec.n_models * spec.ids_per_combo

    color_proto = _prototypes(rng, spec.n_colors, color_w, spec.attr_signal)
    model_proto = _prototypes(rng, spec.n_models, model_w, spec.attr_signal)
    id_proto = _prototypes(rng, n_ids, id_w, spec.id_signal)
    view_proto = _prototypes(rng, 2, d, spec.view_signal)

    id_color = np.repeat(np.arange(spec.n_colors), spec.n_models * spec.ids_per_combo)
    id_model = np.tile(np.repeat(np.arange(spec.n_models), spec.ids_per_combo), spec.n_colors)
    id_view = np.tile(np.arange(spec.ids_per_combo) % 2, spec.n_colors * spec.n_models)

    id_base = np.concatenate([color_proto[id_color], model_proto[id_model], id_proto], axis=1)
    id_base += view_proto[id_view]

    vehicle_ids = np.repeat(np.arange(n_ids), spec.samples_per_id)
    noise = rng.normal(size=(vehicle_ids.shape[0], d)) * spec.noise_sigma
    features = id_base[vehicle_ids] + noise

    ds = Dataset(
        sample_idx=np.arange(vehicle_ids.shape[0], dtype=np.int64),
        vehicle_ids=vehicle_ids.astype(np.int64),
        colors=id_color[vehicle_ids].astype(np.int64),
        models=id_model[vehicle_ids].astype(np.int64),
        views=id_view[vehicle_ids].astype(np.int64),
        features=features,
        n_colors=spec.n_colors,
        n_models=spec.n_models,
    )
    logger.info("[gen-data] %d samples, %d identities, dim %d", len(ds), n_ids, d)
    return ds.validate()


def split_holdout(dataset: Dataset, fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Split each identity's samples into training and hold-out parts.

    ``round(fraction * count)`` samples per identity are held out, capped so at
    least one stays in training. Row order is preserved within both parts.

    Returns
    -------
    (train, holdout)
    """
    if not 0.0 <= fraction < 1.0:
        raise SpecError(f"holdout fraction must lie in [0, 1), got {fraction}")
    rng = np.random.default_rng([seed, 2])
    held = np.zeros(len(dataset), dtype=bool)
    for vid in sorted(dataset.indices_by_id()):
        rows = dataset.indices_by_id()[vid]
        k = min(int(round(fraction * rows.shape[0])), rows.shape[0] - 1)
        if k > 0:
            held[rng.choice(rows, size=k, replace=False)] = True
    train_rows = np.flatnonzero(~held)
    hold_rows = np.flatnonzero(held)
    return dataset.subset(train_rows), dataset.subset(hold_rows)


__all__ = ["generate_synthetic", "split_holdout"]
