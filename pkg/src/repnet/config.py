"""
Run configuration

What this module does:
- Defines the validated, frozen configuration tree for a run: network
  hyperparameters (``RepNetConfig``), synthetic data spec (``DataSpec``),
  training loop (``TrainParams``), retrieval (``RetrievalParams``) and
  diagnostics (``AnalysisParams``), grouped under ``RunConfig``.
- Loads YAML or JSON documents (JSON parses as YAML), applies environment
  overrides (``REPNET__SECTION__KEY=value``) and validates cross-section
  invariants before any work starts.
- Exposes ``RuntimeSettings`` for process-level knobs (``REPNET_THREADS``).

Interaction:
- The CLI loads one ``RunConfig`` per invocation and passes sections down to
  pipelines; checkpoints embed ``RepNetConfig`` as JSON.
- Defaults baked into the models equal the shipped ``config/settings.yaml``.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, MutableMapping, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .domain.errors import ConfigError
from .domain.models import FEATURE_NAMES, RepressionKind


class LossWeights(BaseModel):
    """Per-loss weights in the total objective (equal by default)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    triplet: float = Field(1.0, ge=0.0)
    color: float = Field(1.0, ge=0.0)
    model: float = Field(1.0, ge=0.0)


class RepNetConfig(BaseModel):
    """Network architecture and optimiser hyperparameters.

    ``base_lr`` defaults to 0.01 with ``decay_interval`` 2000 so that a
    2,000-step desk run converges; 0.001 / 50000 remain valid inputs.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    input_dim: int = Field(64, ge=1)
    base_dims: List[int] = Field(default_factory=lambda: [96])
    d_acs: int = Field(64, ge=1)
    d_sls1: int = Field(64, ge=1)
    d_sls2: int = Field(48, ge=1)
    d_sls3: int = Field(32, ge=1)
    n_colors: int = Field(4, ge=1)
    n_models: int = Field(6, ge=1)
    rep_kind: RepressionKind = RepressionKind.PRL
    margin: float = Field(0.2, gt=0.0)
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    base_lr: float = Field(0.01, ge=0.0)
    decay_factor: float = 0.5
    decay_interval: int = Field(2000, ge=1)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    batch_size: int = Field(90, ge=1)
    seed: int = Field(0, ge=0)

    @field_validator("base_dims")
    @classmethod
    def validate_base_dims(cls, v: List[int]) -> List[int]:
        if any(d < 1 for d in v):
            raise ValueError(f"base_dims entries must be >= 1, got {v}")
        return v

    @field_validator("decay_factor")
    @classmethod
    def validate_decay_factor(cls, v: float) -> float:
        if not 0.0 < v <= 1.0:
            raise ValueError(f"decay_factor must lie in (0, 1], got {v}")
        return v

    @model_validator(mode="after")
    def validate_rep_inputs(self) -> "RepNetConfig":
        if self.d_sls1 != self.d_acs:
            raise ValueError(
                f"d_sls1 ({self.d_sls1}) must equal d_acs ({self.d_acs}): "
                "the repression layer takes two inputs of the same dimension"
            )
        return self

    @property
    def base_out_dim(self) -> int:
        return self.base_dims[-1] if self.base_dims else self.input_dim


class DataSpec(BaseModel):
    """Synthetic dataset spec. Feasibility is checked by the generator."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_colors: int = 4
    n_models: int = 6
    ids_per_combo: int = 2
    samples_per_id: int = 10
    feature_dim: int = 64
    attr_signal: float = 3.0
    id_signal: float = 1.5
    noise_sigma: float = 0.3
    view_signal: float = 0.5
    holdout_fraction: float = 0.2


class TrainParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    steps: int = Field(2000, ge=0)
    log_every: int = Field(100, ge=1)


class RetrievalParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    k: int = Field(10, ge=1)
    search: Literal["linear", "bucket"] = "linear"
    query_count: int = Field(30, ge=1)
    query_mode: Literal["random", "tough"] = "random"
    precision_ks: List[int] = Field(default_factory=lambda: [1, 5, 10, 20])
    exclude_self: bool = True

    @field_validator("precision_ks")
    @classmethod
    def validate_ks(cls, v: List[int]) -> List[int]:
        if not v or any(k < 1 for k in v):
            raise ValueError(f"precision_ks must be non-empty and >= 1, got {v}")
        return v


class AnalysisParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    cca_ridge: float = Field(1e-6, ge=0.0)
    cca_split: Literal["train", "holdout"] = "train"
    eig_max_iter: int = Field(10_000, ge=1)
    eig_tol: float = Field(1e-12, gt=0.0)
    occluder_size: Optional[int] = Field(None, ge=1)
    occluder_stride: Optional[int] = Field(None, ge=1)
    occluder_fill: float = 0.0
    target_feature: str = "F_SLS-3"

    @field_validator("target_feature")
    @classmethod
    def validate_feature(cls, v: str) -> str:
        if v not in FEATURE_NAMES:
            raise ValueError(f"target_feature must be one of {FEATURE_NAMES}, got {v!r}")
        return v


class RunConfig(BaseModel):
    """Top-level run document (``config/settings.yaml`` or ``--config``)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    version: int = 1
    model: RepNetConfig = Field(default_factory=RepNetConfig)
    data: DataSpec = Field(default_factory=DataSpec)
    train: TrainParams = Field(default_factory=TrainParams)
    retrieval: RetrievalParams = Field(default_factory=RetrievalParams)
    analysis: AnalysisParams = Field(default_factory=AnalysisParams)

    @field_validator("version")
    @classmethod
    def validate_version(cls, v: int) -> int:
        if v != 1:
            raise ValueError(f"unsupported config version {v}")
        return v

    @model_validator(mode="after")
    def validate_sections_agree(self) -> "RunConfig":
        pairs = (
            ("model.input_dim", self.model.input_dim, "data.feature_dim", self.data.feature_dim),
            ("model.n_colors", self.model.n_colors, "data.n_colors", self.data.n_colors),
            ("model.n_models", self.model.n_models, "data.n_models", self.data.n_models),
        )
        for left, lv, right, rv in pairs:
            if lv != rv:
                raise ValueError(f"{left} ({lv}) must equal {right} ({rv})")
        return self

    @classmethod
    def load(
        cls,
        path: Optional[str | Path] = None,
        *,
        env_prefix: Optional[str] = "REPNET",
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "RunConfig":
        """
        Load, override and validate a run configuration.

        Parameters
        ----------
        path : Optional[str | Path]
            YAML or JSON document. If None, uses ``config/settings.yaml`` from
            the project root when present, otherwise the built-in defaults.
        env_prefix : Optional[str]
            Prefix for nested environment overrides (``REPNET__MODEL__SEED=3``).
            None disables them.
        overrides : Optional[Mapping[str, Any]]
            Nested mapping merged last (used for CLI flags such as ``--seed``).

        Returns
        -------
        RunConfig

        Raises
        ------
        ConfigError
            File missing/unparseable, unknown keys, or failed validation.

        Examples
        --------
        >>> cfg = RunConfig.load(overrides={"model": {"rep_kind": "srl"}})
        >>> cfg.model.rep_kind
        <RepressionKind.SRL: 'srl'>
        """
        if path is None:
            shipped = _find_settings()
            data = _read_document(shipped) if shipped is not None else {}
        else:
            data = _read_document(Path(path))

        if env_prefix:
            _apply_env_overrides(data, env_prefix=env_prefix, nested_delim="__")
        if overrides:
            _deep_merge(data, overrides)
        return cls._validated(data)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Return a re-validated copy with ``overrides`` merged in."""
        data = self.model_dump(mode="json")
        _deep_merge(data, overrides)
        return type(self)._validated(data)

    def dump(self, path: str | Path) -> Path:
        """Write the effective configuration as JSON; loading it reproduces the run."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    @classmethod
    def _validated(cls, data: Mapping[str, Any]) -> "RunConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            first = exc.errors()[0]
            where = ".".join(str(p) for p in first["loc"]) or "<root>"
            raise ConfigError(f"{where}: {first['msg']} ({exc.error_count()} error(s))") from exc


class RuntimeSettings(BaseSettings):
    """Process-level settings read from the environment (``REPNET_THREADS``)."""

    model_config = SettingsConfigDict(env_prefix="REPNET_", extra="ignore", frozen=True)

    threads: int = Field(1, ge=1)


def load_runtime_settings() -> RuntimeSettings:
    try:
        return RuntimeSettings()
    except ValidationError as exc:
        raise ConfigError(f"REPNET_THREADS: {exc.errors()[0]['msg']}") from exc


def _find_settings() -> Optional[Path]:
    """Locate ``config/settings.yaml`` by walking up from this file (max 5 levels)."""
    current = Path(__file__).parent
    for _ in range(5):
        candidate = current / "config" / "settings.yaml"
        if candidate.exists():
            return candidate
        current = current.parent
    return None


def _read_document(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping, got {type(data).__name__}")
    return data


def _apply_env_overrides(
    data: MutableMapping[str, Any], *, env_prefix: str, nested_delim: str
) -> None:
    """Apply environment variable overrides into the nested dict in-place.

    Mapping rule: {PREFIX}__KEY1__KEY2=value -> data[key1][key2] = value.
    Keys are lower-cased; values are parsed as YAML scalars/flow lists.
    """
    prefix = f"{env_prefix}{nested_delim}"
    for env_key, env_value in sorted(os.environ.items()):
        if not env_key.startswith(prefix):
            continue
        tokens = [t.lower() for t in env_key[len(prefix):].split(nested_delim) if t]
        if not tokens:
            continue
        try:
            value = yaml.safe_load(env_value)
        except yaml.YAMLError:
            value = env_value
        _set_deep_value(data, tokens, value)


def _set_deep_value(target: MutableMapping[str, Any], path: List[str], value: Any) -> None:
    """Set a value deep inside a nested dict, creating dict nodes as needed."""
    cur: MutableMapping[str, Any] = target
    for key in path[:-1]:
        if key not in cur or not isinstance(cur[key], MutableMapping):
            cur[key] = {}
        cur = cur[key]  # type: ignore[assignment]
    cur[path[-1]] = value


def _deep_merge(target: MutableMapping[str, Any], patch: Mapping[str, Any]) -> None:
    for key, value in patch.items():
        if isinstance(value, Mapping) and isinstance(target.get(key), MutableMapping):
            _deep_merge(target[key], value)
        else:
            target[key] = value


__all__ = [
    "LossWeights",
    "RepNetConfig",
    "DataSpec",
    "TrainParams",
    "RetrievalParams",
    "AnalysisParams",
    "RunConfig",
    "RuntimeSettings",
    "load_runtime_settings",
]
