"""
Hardest-triplet sampler

A triplet is (anchor, positive, negative) where anchor and positive are two
different samples of one identity, and the negative is a sample of another
identity with exactly the same color and model.

Sampling draws an eligible (color, model) cell uniformly, then an anchor
identity uniformly among the cell's identities that have >= 2 samples, then a
negative identity uniformly among the cell's other identities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from ..domain.errors import ExhaustedSamplerError, ParamValidationError
from ..domain.models import Dataset, TripletBatch


@dataclass(frozen=True)
class _Cell:
    key: Tuple[int, int]
    anchor_ids: Tuple[int, ...]
    all_ids: Tuple[int, ...]


class TripletSampler:
    """Precomputes eligible cells once; ``sample`` draws from a caller-owned RNG."""

    def __init__(self, dataset: Dataset):
        self._dataset = dataset
        self._rows = dataset.indices_by_id()
        self._cells = self._eligible_cells()

    @property
    def dataset(self) -> Dataset:
        return self._dataset

    @property
    def cell_keys(self) -> List[Tuple[int, int]]:
        return [c.key for c in self._cells]

    def _eligible_cells(self) -> List[_Cell]:
        ds = self._dataset
        if len(ds) == 0:
            raise ExhaustedSamplerError("dataset is empty")
        if len(self._rows) < 2:
            raise ExhaustedSamplerError(f"need at least 2 identities for a negative, found {len(self._rows)}")

        by_cell: Dict[Tuple[int, int], List[int]] = {}
        for vid in sorted(self._rows):
            first = self._rows[vid][0]
            by_cell.setdefault((int(ds.colors[first]), int(ds.models[first])), []).append(vid)

        shared = {k: ids for k, ids in by_cell.items() if len(ids) >= 2}
        if not shared:
            raise ExhaustedSamplerError(
                "no (color, model) cell holds 2 or more identities; a same-attribute negative is impossible"
            )
        cells = []
        for key in sorted(shared):
            ids = shared[key]
            anchors = tuple(v for v in ids if self._rows[v].shape[0] >= 2)
            if anchors:
                cells.append(_Cell(key=key, anchor_ids=anchors, all_ids=tuple(ids)))
        if not cells:
            raise ExhaustedSamplerError(
                "no identity with >= 2 samples shares its (color, model) cell with another identity"
            )
        return cells

    def sample(self, count: int, rng: np.random.Generator) -> TripletBatch:
        """Draw ``count`` rule-satisfying triplets."""
        if count < 1:
            raise ParamValidationError(f"triplet count must be >= 1, got {count}")
        anchors = np.empty(count, dtype=np.int64)
        positives = np.empty(count, dtype=np.int64)
        negatives = np.empty(count, dtype=np.int64)
        for t in range(count):
            cell = self._cells[int(rng.integers(len(self._cells)))]
            anchor_id = cell.anchor_ids[int(rng.integers(len(cell.anchor_ids)))]
            a, p = rng.choice(self._rows[anchor_id], size=2, replace=False)
            others = [v for v in cell.all_ids if v != anchor_id]
            neg_id = others[int(rng.integers(len(others)))]
            neg_rows = self._rows[neg_id]
            anchors[t], positives[t] = a, p
            negatives[t] = neg_rows[int(rng.integers(neg_rows.shape[0]))]
        return TripletBatch(self._dataset, anchors, positives, negatives)


def sample_hard_triplets(dataset: Dataset, count: int, rng: np.random.Generator) -> TripletBatch:
    """One-shot form of ``TripletSampler(dataset).sample(count, rng)``."""
    return TripletSampler(dataset).sample(count, rng)


__all__ = ["TripletSampler", "sample_hard_triplets"]
