"""
Gallery of embedded samples

What this module does:
- ``Gallery`` holds labels and the four per-entry vectors used by search:
  the SLS embedding, the ACS feature and the color/model probabilities.
- Converts galleries to and from Parquet (``storage.schema.gallery_schema``).
- ``embed_dataset`` runs a trained network over a dataset to build one.

Entry ids are row positions; ``sample_idx`` links rows back to the manifest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, NamedTuple, Optional, Sequence

import numpy as np
import pyarrow as pa
import pyarrow.parquet as pq

from ..config import RepNetConfig
from ..domain.errors import ConsistencyError, RepNetError, ShapeError, TableFormatError
from ..domain.models import VIEW_CODES, Dataset
from ..network import RepNetParams, embed
from ..storage.schema import GALLERY_COLUMNS, gallery_schema
from ..storage.writers import write_parquet

logger = logging.getLogger(__name__)


class GalleryEntry(NamedTuple):
    """Search-side view of one item (a query or a gallery row)."""

    sample_idx: int
    vehicle_id: int
    sls: np.ndarray
    acs: np.ndarray
    color_probs: np.ndarray
    model_probs: np.ndarray

    @property
    def concat(self) -> np.ndarray:
        return np.concatenate([self.sls, self.acs])


@dataclass(frozen=True)
class Gallery:
    sample_idx: np.ndarray
    vehicle_ids: np.ndarray
    colors: np.ndarray
    models: np.ndarray
    views: np.ndarray
    splits: np.ndarray
    sls: np.ndarray
    acs: np.ndarray
    color_probs: np.ndarray
    model_probs: np.ndarray
    _concat: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return int(self.sample_idx.shape[0])

    @property
    def concat(self) -> np.ndarray:
        """(n, d_sls + d_acs) features for linear search; built once."""
        if self._concat is None:
            object.__setattr__(self, "_concat", np.ascontiguousarray(np.hstack([self.sls, self.acs])))
        return self._concat

    def validate(self) -> "Gallery":
        n = len(self)
        for name in ("vehicle_ids", "colors", "models", "views", "splits"):
            if getattr(self, name).shape != (n,):
                raise ShapeError(f"gallery column {name} has shape {getattr(self, name).shape}, expected ({n},)")
        for name in ("sls", "acs", "color_probs", "model_probs"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[0] != n:
                raise ShapeError(f"gallery column {name} has shape {arr.shape}, expected ({n}, d)")
        return self

    def entry(self, row: int) -> GalleryEntry:
        return GalleryEntry(
            sample_idx=int(self.sample_idx[row]),
            vehicle_id=int(self.vehicle_ids[row]),
            sls=self.sls[row],
            acs=self.acs[row],
            color_probs=self.color_probs[row],
            model_probs=self.model_probs[row],
        )

    def rows_by_sample_idx(self, sample_idx: Sequence[int]) -> np.ndarray:
        """Row positions of the given sample ids."""
        lookup: Dict[int, int] = {int(s): i for i, s in enumerate(self.sample_idx.tolist())}
        missing = [int(s) for s in sample_idx if int(s) not in lookup]
        if missing:
            raise ConsistencyError(f"sample_idx {missing[:5]} not present in gallery")
        return np.asarray([lookup[int(s)] for s in sample_idx], dtype=np.int64)

    def subset(self, rows: np.ndarray) -> "Gallery":
        rows = np.asarray(rows, dtype=np.int64)
        return Gallery(**{name: getattr(self, name)[rows] for name in _COLUMNS})

    def to_table(self) -> pa.Table:
        schema = gallery_schema(self.sls.shape[1], self.acs.shape[1], self.color_probs.shape[1], self.model_probs.shape[1])
        arrays = [
            pa.array(self.sample_idx, pa.int64()),
            pa.array(self.vehicle_ids, pa.int64()),
            pa.array(self.colors, pa.int64()),
            pa.array(self.models, pa.int64()),
            pa.array([VIEW_CODES[int(v)].value for v in self.views], pa.string()),
            pa.array([str(s) for s in self.splits], pa.string()),
        ]
        for name in ("sls", "acs", "color_probs", "model_probs"):
            matrix = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arrays.append(pa.FixedSizeListArray.from_arrays(pa.array(matrix.reshape(-1)), matrix.shape[1]))
        return pa.Table.from_arrays(arrays, schema=schema)

    @classmethod
    def from_table(cls, table: pa.Table) -> "Gallery":
        n = table.num_rows
        view_code = {v.value: i for i, v in enumerate(VIEW_CODES)}

        def matrix(name: str) -> np.ndarray:
            column = table.column(name).combine_chunks()
            width = column.type.list_size
            return column.flatten().to_numpy(zero_copy_only=False).astype(np.float64).reshape(n, width)

        return cls(
            sample_idx=table.column("sample_idx").to_numpy().astype(np.int64),
            vehicle_ids=table.column("vehicle_id").to_numpy().astype(np.int64),
            colors=table.column("color").to_numpy().astype(np.int64),
            models=table.column("model").to_numpy().astype(np.int64),
            views=np.asarray([view_code[v] for v in table.column("view").to_pylist()], dtype=np.int64),
            splits=np.asarray(table.column("split").to_pylist(), dtype=object),
            sls=matrix("sls"),
            acs=matrix("acs"),
            color_probs=matrix("color_probs"),
            model_probs=matrix("model_probs"),
        ).validate()


_COLUMNS = (
    "sample_idx",
    "vehicle_ids",
    "colors",
    "models",
    "views",
    "splits",
    "sls",
    "acs",
    "color_probs",
    "model_probs",
)


def write_gallery(path: Path | str, gallery: Gallery) -> Path:
    return write_parquet(path, gallery.to_table())


def read_gallery(path: Path | str) -> Gallery:
    """
    Load a gallery written by ``write_gallery``.

    Raises
    ------
    TableFormatError
        Not a Parquet file, a gallery column is missing, or a value cannot
        be decoded.
    """
    try:
        table = pq.read_table(path)
    except pa.ArrowException as exc:
        raise TableFormatError(f"{path}: not a readable Parquet gallery: {exc}") from None
    missing = [name for name in GALLERY_COLUMNS if name not in table.column_names]
    if missing:
        raise TableFormatError(f"{path}: gallery lacks columns {missing}")
    try:
        return Gallery.from_table(table)
    except RepNetError:
        raise
    except (pa.ArrowException, AttributeError, KeyError, TypeError, ValueError) as exc:
        raise TableFormatError(f"{path}: cannot decode gallery: {type(exc).__name__}: {exc}") from None


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def embed_dataset(
    params: RepNetParams,
    config: RepNetConfig,
    dataset: Dataset,
    split: str | Sequence[str],
) -> Gallery:
    """
    Embed every sample of ``dataset`` into a gallery.

    Parameters
    ----------
    split : str | Sequence[str]
        Split label for all rows, or one label per row.
    """
    emb = embed(params, config, dataset.features)
    splits = np.asarray([split] * len(dataset) if isinstance(split, str) else list(split), dtype=object)
    gallery = Gallery(
        sample_idx=dataset.sample_idx.copy(),
        vehicle_ids=dataset.vehicle_ids.copy(),
        colors=dataset.colors.copy(),
        models=dataset.models.copy(),
        views=dataset.views.copy(),
        splits=splits,
        sls=emb.sls,
        acs=emb.acs,
        color_probs=emb.color_probs,
        model_probs=emb.model_probs,
    )
    logger.info("[embed] %d entries, sls dim %d, acs dim %d", len(gallery), emb.sls.shape[1], emb.acs.shape[1])
    return gallery.validate()


__all__ = [
    "GalleryEntry",
    "Gallery",
    "write_gallery",
    "read_gallery",
    "one_hot",
    "embed_dataset",
]
