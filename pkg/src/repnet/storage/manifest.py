"""
Dataset directory: manifest + feature sidecar

A dataset directory holds:
- manifest.csv   UTF-8, header exactly ``sample_idx,vehicle_id,color,model,view``
- features.rpnf  RPNF feature matrix, one row per manifest row, same order
- dataset.yaml   class counts (n_colors, n_models) and feature_dim

Labels round-trip exactly; features round-trip to float32 precision.
``read_manifest`` validates the identity rule before returning.
"""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..domain.errors import ConsistencyError, DatasetValidationError, ManifestParseError
from ..domain.models import VIEW_CODES, Dataset, View
from .features import read_features, write_features
from .schema import MANIFEST_COLUMNS
from .writers import write_text

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.csv"
FEATURES_FILE = "features.rpnf"
DATASET_FILE = "dataset.yaml"

_VIEW_BY_NAME: Dict[str, int] = {v.value: i for i, v in enumerate(VIEW_CODES)}


def write_manifest(dataset: Dataset, directory: Path | str) -> Path:
    """Write manifest, feature file and class counts into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)
    for i in range(len(dataset)):
        writer.writerow([
            int(dataset.sample_idx[i]),
            int(dataset.vehicle_ids[i]),
            int(dataset.colors[i]),
            int(dataset.models[i]),
            VIEW_CODES[int(dataset.views[i])].value,
        ])
    write_features(directory / FEATURES_FILE, dataset.features)
    write_text(directory / MANIFEST_FILE, buf.getvalue())
    meta = {
        "n_colors": int(dataset.n_colors),
        "n_models": int(dataset.n_models),
        "feature_dim": int(dataset.feature_dim),
        "count": len(dataset),
    }
    write_text(directory / DATASET_FILE, yaml.safe_dump(meta, sort_keys=True))
    logger.info("[manifest] wrote %d samples to %s", len(dataset), directory)
    return directory


def _parse_rows(path: Path) -> List[List[int]]:
    rows: List[List[int]] = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != MANIFEST_COLUMNS:
            raise ManifestParseError(f"header must be {','.join(MANIFEST_COLUMNS)}, got {header}", line=1)
        for record in reader:
            line = reader.line_num
            if not record:
                continue
            if len(record) != len(MANIFEST_COLUMNS):
                raise ManifestParseError(f"expected {len(MANIFEST_COLUMNS)} fields, got {len(record)}", line=line)
            try:
                values = [int(field) for field in record[:4]]
            except ValueError:
                raise ManifestParseError(f"non-integer label in {record[:4]}", line=line) from None
            view = record[4].strip().lower()
            if view not in _VIEW_BY_NAME:
                raise ManifestParseError(
                    f"view must be one of {[v.value for v in View]}, got {record[4]!r}", line=line
                )
            rows.append(values + [_VIEW_BY_NAME[view]])
    return rows


class DatasetCounts(BaseModel):
    """Contents of ``dataset.yaml``."""

    model_config = ConfigDict(extra="ignore")

    n_colors: int = Field(ge=1)
    n_models: int = Field(ge=1)
    feature_dim: int = Field(ge=1)
    count: Optional[int] = Field(default=None, ge=0)


def _read_counts(directory: Path) -> Optional[DatasetCounts]:
    path = directory / DATASET_FILE
    if not path.exists():
        return None
    try:
        meta = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise DatasetValidationError(f"{path}: not valid YAML: {exc}") from None
    if not isinstance(meta, dict):
        raise DatasetValidationError(f"{path}: expected a mapping")
    try:
        return DatasetCounts.model_validate(meta)
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors())
        raise DatasetValidationError(f"{path}: {problems}") from None


def read_manifest(directory: Path | str) -> Dataset:
    """
    Load and validate a dataset directory.

    Raises
    ------
    ManifestParseError
        Malformed header or row (carries the line number).
    ConsistencyError
        Manifest row count differs from the feature file count, or
        dataset.yaml disagrees with either on count or feature_dim.
    DatasetValidationError
        Label out of range, an identity mixing color/model/view, or a
        dataset.yaml key missing or out of range.
    CheckpointFormatError
        Corrupt feature file.
    """
    directory = Path(directory)
    manifest_path = directory / MANIFEST_FILE
    if not manifest_path.exists():
        raise DatasetValidationError(f"manifest not found: {manifest_path}")
    rows = _parse_rows(manifest_path)
    features = read_features(directory / FEATURES_FILE)
    if features.shape[0] != len(rows):
        raise ConsistencyError(
            f"manifest has {len(rows)} rows but {FEATURES_FILE} holds {features.shape[0]} vectors"
        )

    table = np.asarray(rows, dtype=np.int64).reshape(len(rows), len(MANIFEST_COLUMNS))
    counts = _read_counts(directory)
    if counts is not None:
        if counts.feature_dim != features.shape[1]:
            raise ConsistencyError(
                f"{DATASET_FILE} declares feature_dim {counts.feature_dim} but {FEATURES_FILE} holds {features.shape[1]}"
            )
        if counts.count is not None and counts.count != len(rows):
            raise ConsistencyError(f"{DATASET_FILE} declares {counts.count} samples but the manifest has {len(rows)}")
        n_colors, n_models = counts.n_colors, counts.n_models
    else:
        n_colors = int(table[:, 2].max()) + 1 if len(rows) else 0
        n_models = int(table[:, 3].max()) + 1 if len(rows) else 0

    dataset = Dataset(
        sample_idx=table[:, 0].copy(),
        vehicle_ids=table[:, 1].copy(),
        colors=table[:, 2].copy(),
        models=table[:, 3].copy(),
        views=table[:, 4].copy(),
        features=features,
        n_colors=n_colors,
        n_models=n_models,
    )
    return dataset.validate()


__all__ = ["MANIFEST_FILE", "FEATURES_FILE", "DATASET_FILE", "DatasetCounts", "write_manifest", "read_manifest"]
