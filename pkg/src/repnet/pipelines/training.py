"""
Training session

What this module does:
- Splits a dataset into training and hold-out parts, then runs ``steps``
  SGD-momentum updates on hardest-triplet batches drawn from the training
  part. Every step is logged (``iteration,lr,triplet_loss,color_loss,
  model_loss,total``).
- Persists a session: checkpoint (RPNC), loss log CSV and the effective run
  configuration as JSON.

Determinism:
- Parameters come from ``[seed, 0]``, the split from ``[seed, 2]`` and the
  sampler from ``[seed, 5]``; a single-threaded rerun reproduces the loss
  log and checkpoint byte for byte.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..config import RunConfig
from ..data.sampling import TripletSampler
from ..data.synthetic import split_holdout
from ..domain.errors import DatasetValidationError
from ..domain.models import Dataset
from ..network import RepNetParams, init_params, lr_at, train_step
from ..storage.checkpoint import save_checkpoint
from ..storage.schema import LOSS_LOG_COLUMNS
from ..storage.writers import write_csv

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.rpnc"
LOSS_LOG_FILE = "loss_log.csv"
CONFIG_FILE = "effective_config.json"

# Steps averaged at each end of the log when comparing initial and final loss.
TREND_WINDOW = 50


@dataclass(frozen=True)
class TrainingResult:
    params: RepNetParams
    config: RunConfig
    loss_log: pd.DataFrame
    train: Dataset
    holdout: Dataset

    def window_mean(self, column: str, *, last: bool) -> float:
        """Mean of ``column`` over the first (or last) ``TREND_WINDOW`` steps."""
        if self.loss_log.empty:
            return float("nan")
        values = self.loss_log[column].to_numpy()
        window = min(TREND_WINDOW, values.shape[0])
        return float(np.mean(values[-window:] if last else values[:window]))

    @property
    def initial_triplet(self) -> float:
        return self.window_mean("triplet_loss", last=False)

    @property
    def final_triplet(self) -> float:
        return self.window_mean("triplet_loss", last=True)


def check_dataset_fits(dataset: Dataset, run_config: RunConfig) -> None:
    """
    Raises
    ------
    DatasetValidationError
        Feature width or class counts differ from the model's.
    """
    cfg = run_config.model
    got = (dataset.feature_dim, dataset.n_colors, dataset.n_models)
    want = (cfg.input_dim, cfg.n_colors, cfg.n_models)
    if got != want:
        raise DatasetValidationError(
            f"dataset has (feature_dim, n_colors, n_models) = {got}, model expects {want}"
        )


def split_for_run(dataset: Dataset, run_config: RunConfig) -> Tuple[Dataset, Dataset]:
    """Train/hold-out split used by every command of a run (same seed, same fraction)."""
    return split_holdout(dataset, run_config.data.holdout_fraction, run_config.model.seed)


def train_model(
    run_config: RunConfig,
    dataset: Dataset,
    *,
    params: Optional[RepNetParams] = None,
) -> TrainingResult:
    """
    Train a network on the training part of ``dataset``.

    Parameters
    ----------
    run_config : RunConfig
        Model, schedule and step count (``train.steps``).
    dataset : Dataset
        Full dataset; the hold-out part is split off and left untouched.
    params : RepNetParams, optional
        Starting parameters (copied); fresh seeded initialisation when omitted.

    Raises
    ------
    DatasetValidationError
        Dataset feature width or class counts differ from the model's.
    ExhaustedSamplerError
        The training part admits no hardest triplet.
    """
    cfg = run_config.model
    check_dataset_fits(dataset, run_config)
    train, holdout = split_for_run(dataset, run_config)
    sampler = TripletSampler(train)
    rng = np.random.default_rng([cfg.seed, 5])
    params = init_params(cfg) if params is None else params.copy()
    params.validate(cfg)

    rows: List[Tuple[int, float, float, float, float, float]] = []
    steps = run_config.train.steps
    logger.info(
        "[train] %s, %d steps, batch %d, %d training samples (%d held out)",
        cfg.rep_kind.value, steps, cfg.batch_size, len(train), len(holdout),
    )
    for iteration in range(steps):
        batch = sampler.sample(cfg.batch_size, rng)
        report = train_step(params, cfg, batch, iteration)
        rows.append((iteration, lr_at(iteration, cfg), report.triplet, report.color, report.model, report.total))
        if (iteration + 1) % run_config.train.log_every == 0:
            logger.info(
                "[train] step %d: triplet %.5f color %.5f model %.5f total %.5f",
                iteration + 1, report.triplet, report.color, report.model, report.total,
            )

    log = pd.DataFrame(rows, columns=list(LOSS_LOG_COLUMNS))
    log["iteration"] = log["iteration"].astype(np.int64)
    return TrainingResult(params=params, config=run_config, loss_log=log, train=train, holdout=holdout)


def write_training_outputs(result: TrainingResult, out_dir: Path | str) -> Dict[str, Path]:
    """Write checkpoint, loss log and effective config under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "checkpoint": save_checkpoint(result.params, result.config.model, out / CHECKPOINT_FILE),
        "loss_log": write_csv(out / LOSS_LOG_FILE, result.loss_log),
        "config": result.config.dump(out / CONFIG_FILE),
    }
    logger.info("[train] outputs written to %s", out)
    return paths


__all__ = [
    "CHECKPOINT_FILE",
    "LOSS_LOG_FILE",
    "CONFIG_FILE",
    "TREND_WINDOW",
    "TrainingResult",
    "check_dataset_fits",
    "split_for_run",
    "train_model",
    "write_training_outputs",
]
