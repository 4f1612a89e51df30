"""
Domain models

Shared value types used across numerics, data, retrieval and pipelines:

- RepressionKind: which repression layer joins the two streams
- View: front/back capture label
- Sample: one labelled item with its raw feature vector
- Dataset: column-oriented collection of samples (labels + feature matrix)
- TripletBatch: anchor/positive/negative index triples into a Dataset

No business logic beyond invariant checks lives here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np

from .errors import DatasetValidationError, RejectedBatchError, ShapeError


class RepressionKind(str, Enum):
    """Repression layer variant.

    NOREP is the two-stream baseline without repression: a plain FC map of
    F_SLS-1 that ignores F_ACS.
    """

    PRL = "prl"
    SRL = "srl"
    CRL = "crl"
    NOREP = "norep"


class View(str, Enum):
    FRONT = "front"
    BACK = "back"


VIEW_CODES: Tuple[View, View] = (View.FRONT, View.BACK)

# Named intermediate features exposed by a forward pass, in network order.
FEATURE_NAMES: Tuple[str, ...] = (
    "F_base",
    "F_ACS",
    "F_model",
    "F_color",
    "F_SLS-1",
    "F_SLS-2",
    "F_SLS-3",
)


@dataclass(frozen=True)
class Sample:
    """One gallery/query item."""

    sample_idx: int
    vehicle_id: int
    color: int
    model: int
    view: View
    features: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Column-oriented labelled dataset.

    Attributes
    ----------
    sample_idx : np.ndarray
        Stable sample identifiers (int64), unique.
    vehicle_ids, colors, models : np.ndarray
        Integer labels, one per sample.
    views : np.ndarray
        View codes (0 = front, 1 = back).
    features : np.ndarray
        (n, feature_dim) float64 matrix.
    n_colors, n_models : int
        Class counts; every label must lie in [0, count).
    """

    sample_idx: np.ndarray
    vehicle_ids: np.ndarray
    colors: np.ndarray
    models: np.ndarray
    views: np.ndarray
    features: np.ndarray
    n_colors: int
    n_models: int
    _by_id: Dict[int, np.ndarray] = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __len__(self) -> int:
        return int(self.sample_idx.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def sample(self, i: int) -> Sample:
        return Sample(
            sample_idx=int(self.sample_idx[i]),
            vehicle_id=int(self.vehicle_ids[i]),
            color=int(self.colors[i]),
            model=int(self.models[i]),
            view=VIEW_CODES[int(self.views[i])],
            features=self.features[i],
        )

    def indices_by_id(self) -> Dict[int, np.ndarray]:
        """Row positions per vehicle_id, ascending; cached."""
        if self._by_id is None:
            groups: Dict[int, List[int]] = {}
            for row, vid in enumerate(self.vehicle_ids.tolist()):
                groups.setdefault(int(vid), []).append(row)
            object.__setattr__(
                self, "_by_id", {k: np.asarray(v, dtype=np.int64) for k, v in groups.items()}
            )
        return self._by_id

    def subset(self, rows: np.ndarray) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            sample_idx=self.sample_idx[rows],
            vehicle_ids=self.vehicle_ids[rows],
            colors=self.colors[rows],
            models=self.models[rows],
            views=self.views[rows],
            features=self.features[rows],
            n_colors=self.n_colors,
            n_models=self.n_models,
        )

    def validate(self) -> "Dataset":
        """Check shapes, label ranges and the ID -> (color, model, view) rule."""
        n = len(self)
        for name in ("vehicle_ids", "colors", "models", "views"):
            if getattr(self, name).shape != (n,):
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected ({n},)")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ShapeError(f"features has shape {self.features.shape}, expected ({n}, d)")
        if not np.all(np.isfinite(self.features)):
            raise DatasetValidationError("features contain NaN or Inf")
        if len(np.unique(self.sample_idx)) != n:
            raise DatasetValidationError("sample_idx values are not unique")
        _check_range("color", self.colors, self.n_colors)
        _check_range("model", self.models, self.n_models)
        _check_range("view", self.views, len(VIEW_CODES))

        for vid, rows in self.indices_by_id().items():
            for name in ("colors", "models", "views"):
                values = getattr(self, name)[rows]
                if np.any(values != values[0]):
                    raise DatasetValidationError(
                        f"vehicle_id {vid} mixes {name[:-1]} labels {sorted(set(values.tolist()))}"
                    )
        return self


def _check_range(name: str, values: np.ndarray, bound: int) -> None:
    if values.size == 0:
        return
    lo, hi = int(values.min()), int(values.max())
    if lo < 0 or hi >= bound:
        bad = hi if hi >= bound else lo
        raise DatasetValidationError(f"{name} index {bad} outside [0, {bound})")


@dataclass(frozen=True)
class TripletBatch:
    """Anchor/positive/negative row positions into ``dataset``."""

    dataset: Dataset
    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __len__(self) -> int:
        return int(self.anchors.shape[0])

    def inputs(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        f = self.dataset.features
        return f[self.anchors], f[self.positives], f[self.negatives]

    def violations(self) -> List[str]:
        """Human-readable list of rule violations (empty when valid)."""
        ds = self.dataset
        problems: List[str] = []
        if not (self.anchors.shape == self.positives.shape == self.negatives.shape):
            return ["anchor/positive/negative arrays differ in length"]
        for t, (a, p, n) in enumerate(zip(self.anchors.tolist(), self.positives.tolist(), self.negatives.tolist())):
            if a == p:
                problems.append(f"triplet {t}: anchor and positive are the same sample")
            if ds.vehicle_ids[a] != ds.vehicle_ids[p]:
                problems.append(f"triplet {t}: positive has a different vehicle_id")
            if ds.vehicle_ids[a] == ds.vehicle_ids[n]:
                problems.append(f"triplet {t}: negative shares the anchor vehicle_id")
            if ds.colors[a] != ds.colors[n] or ds.models[a] != ds.models[n]:
                problems.append(f"triplet {t}: negative differs in color/model")
        return problems

    def validate(self) -> "TripletBatch":
        if len(self) == 0:
            raise RejectedBatchError("empty triplet batch")
        problems = self.violations()
        if problems:
            raise RejectedBatchError(f"{len(problems)} rule violation(s); first: {problems[0]}")
        return self


__all__ = [
    "RepressionKind",
    "View",
    "VIEW_CODES",
    "FEATURE_NAMES",
    "Sample",
    "Dataset",
    "TripletBatch",
]
