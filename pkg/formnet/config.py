"""Training configuration files.

One JSON file carries the model, the data paths and both training phases;
the CLI sub-command picks the phase. Unknown keys are rejected.
"""

import json
import logging
import os
from pathlib import Path
from typing import Optional, Union
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from .errors import ConfigError
from .graph import CorruptionConfig
from .model import ModelConfig
from .objectives import LossWeights

logger = logging.getLogger(__name__)

CONFIG_DIR_ENV = "FORMNET_CONFIG_DIR"


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    train: str
    eval: Optional[str] = None
    lowercase: bool = True


class PretrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    steps: int = Field(default=1000, ge=0)
    batch_size: int = Field(default=8, gt=0)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    warmup_proportion: float = Field(default=0.01, ge=0.0, lt=1.0)
    mlm_rate: float = Field(default=0.15, ge=0.0, le=1.0)
    corruption: CorruptionConfig = Field(default_factory=CorruptionConfig)
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    checkpoint_interval: int = Field(default=0, ge=0)
    log_path: Optional[str] = None


class FinetuneConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=20, ge=0)
    batch_size: int = Field(default=8, gt=0)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    warmup_proportion: float = Field(default=0.0, ge=0.0, lt=1.0)
    log_path: Optional[str] = None
    # ignored with a warning
    corruption: Optional[CorruptionConfig] = None


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0, ge=0)
    model: ModelConfig = Field(default_factory=ModelConfig)
    data: DataConfig
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = Field(default_factory=FinetuneConfig)


def resolve_config_path(path: Union[str, Path]) -> Path:
    """Use ``path`` as given, else look it up under ``FORMNET_CONFIG_DIR``."""
    candidate = Path(path)
    if candidate.exists() or candidate.is_absolute():
        return candidate
    base = os.getenv(CONFIG_DIR_ENV)
    if base and (Path(base) / candidate).exists():
        return Path(base) / candidate
    return candidate


def load_json(path: Union[str, Path]) -> dict:
    resolved = resolve_config_path(path)
    try:
        payload = json.loads(resolved.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {resolved}: {e}") from e
    if not isinstance(payload, dict):
        raise ConfigError(f"config {resolved} must hold a JSON object")
    return payload


def validate(model: type, payload: dict, source: str) -> BaseModel:
    try:
        return model.model_validate(  # type: ignore[attr-defined, no-any-return]
            payload
        )
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first.get("loc", ())) or "<root>"
        raise ConfigError(f"{source}: {where}: {first['msg']}") from e


def load_config(path: Union[str, Path]) -> TrainConfig:
    config = validate(TrainConfig, load_json(path), str(path))
    assert isinstance(config, TrainConfig)
    logger.info(f"Loaded config {path} hidden={config.model.hidden} seed={config.seed}")
    return config
