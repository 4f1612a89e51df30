"""
Occlusion saliency

What this module does:
- Slides a fill-valued occluder over an input (a vector, or a 2-D grid) and
  records, per position, the L2 norm of the change it causes in a chosen
  feature. Bright cells mark inputs that feature depends on.
- Writes maps as CSV grids and as P2 (ASCII) PGM images scaled to 0-255.

Defaults: size = max(1, extent // 16), stride = max(1, size // 2), where
extent is the vector length or the shorter grid side. Grids use square
occluders. Positions may be evaluated on a thread pool; output order is
always row-major over positions.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..config import RepNetConfig
from ..domain.errors import ParamValidationError
from ..network import RepNetParams, feature_extractor
from ..storage.writers import write_csv, write_text

logger = logging.getLogger(__name__)

Extractor = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Occluder:
    size: Optional[int] = None
    stride: Optional[int] = None
    fill: float = 0.0

    def resolve(self, extent: int) -> Tuple[int, int]:
        size = self.size if self.size is not None else max(1, extent // 16)
        stride = self.stride if self.stride is not None else max(1, size // 2)
        if size < 1 or stride < 1:
            raise ParamValidationError(f"occluder size and stride must be >= 1, got {size}, {stride}")
        if size > extent:
            raise ParamValidationError(f"occluder size {size} exceeds input extent {extent}")
        return size, stride


@dataclass(frozen=True)
class SaliencyMap:
    values: np.ndarray
    size: int
    stride: int
    feature: str

    @property
    def grid(self) -> np.ndarray:
        """Values as a 2-D array (one row for vector inputs)."""
        return self.values if self.values.ndim == 2 else self.values[None, :]


def grid_dims(extent: int, size: int, stride: int) -> int:
    return (extent - size) // stride + 1


def occlusion_map(
    extract: Extractor,
    x: np.ndarray,
    occluder: Occluder = Occluder(),
    *,
    feature: str = "feature",
    threads: int = 1,
) -> SaliencyMap:
    """
    Occlusion map of ``extract`` around input ``x``.

    Parameters
    ----------
    extract : Callable
        Maps an input shaped like ``x`` to a feature vector.
    x : np.ndarray
        (d,) vector or (h, w) grid.
    threads : int
        Worker threads for occluder positions.

    Raises
    ------
    ParamValidationError
        Occluder larger than the input, or input rank other than 1 or 2.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2):
        raise ParamValidationError(f"saliency input must be 1-D or 2-D, got shape {x.shape}")
    size, stride = occluder.resolve(min(x.shape))
    counts = tuple(grid_dims(extent, size, stride) for extent in x.shape)
    positions: List[Tuple[int, ...]] = [tuple(p) for p in np.ndindex(*counts)]
    reference = np.asarray(extract(x), dtype=np.float64)

    def score(position: Tuple[int, ...]) -> float:
        occluded = x.copy()
        region = tuple(slice(p * stride, p * stride + size) for p in position)
        occluded[region] = occluder.fill
        return float(np.linalg.norm(np.asarray(extract(occluded)) - reference))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(score, positions))
    else:
        values = [score(p) for p in positions]
    logger.info("[saliency] %s: %d positions, size %d stride %d", feature, len(positions), size, stride)
    return SaliencyMap(values=np.asarray(values).reshape(counts), size=size, stride=stride, feature=feature)


def occlusion_saliency(
    params: RepNetParams,
    config: RepNetConfig,
    x: np.ndarray,
    target_feature: str,
    occluder: Occluder = Occluder(),
    *,
    threads: int = 1,
) -> SaliencyMap:
    """Saliency of a named network feature; a 2-D ``x`` is flattened row-major for the network."""
    extract = feature_extractor(params, config, target_feature)
    return occlusion_map(extract, x, occluder, feature=target_feature, threads=threads)


def write_saliency_csv(path: Path | str, saliency: SaliencyMap) -> Path:
    return write_csv(path, pd.DataFrame(saliency.grid).rename(columns=lambda c: f"c{c}"))


def to_pgm(saliency: SaliencyMap) -> str:
    grid = saliency.grid
    peak = float(grid.max()) if grid.size else 0.0
    scaled = np.zeros(grid.shape, dtype=np.int64) if peak == 0.0 else np.rint(grid / peak * 255).astype(np.int64)
    lines = ["P2", f"{grid.shape[1]} {grid.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in scaled]
    return "\n".join(lines) + "\n"


def write_pgm(path: Path | str, saliency: SaliencyMap) -> Path:
    return write_text(path, to_pgm(saliency))


__all__ = [
    "Occluder",
    "SaliencyMap",
    "grid_dims",
    "occlusion_map",
    "occlusion_saliency",
    "write_saliency_csv",
    "to_pgm",
    "write_pgm",
]
