"""Reduced-scale ablations.

Each ablation trains and scores two or more arms on the same synthetic
corpora and reports the mean micro-F1 of every arm over the seeds:

- ``gcl``: MLM + graph-contrastive pre-training against MLM only.
- ``image``: text + layout against text + layout + edge image, fine-tuned
  from scratch.
- ``decoupled``: decoupled against shared feature drop rates.
- ``drop-rate``: one shared drop rate for edges and every feature channel.
"""

import logging
from typing import Any, Callable, Dict, List, Optional, Sequence
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from .config import DataConfig, FinetuneConfig, PretrainConfig, TrainConfig
from .data.documents import Document
from .data.synthetic import SyntheticFormSpec, generate_synthetic_corpus, split_corpus
from .metrics import TrainingMetrics
from .model import ModelConfig
from .trainer import Trainer

logger = logging.getLogger(__name__)

ABLATIONS = ("gcl", "image", "decoupled", "drop-rate")


class AblationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: ModelConfig = Field(default_factory=ModelConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = Field(default_factory=lambda: FinetuneConfig(epochs=10))
    corpus: SyntheticFormSpec = Field(
        default_factory=lambda: SyntheticFormSpec(num_documents=2400)
    )
    # relative sizes, normalised by their sum
    splits: Dict[str, float] = Field(
        default_factory=lambda: {"pretrain": 2000, "finetune": 200, "test": 200}
    )
    seeds: List[int] = Field(default=[0, 1, 2], min_length=1)
    drop_rates: List[float] = Field(default=[0.1, 0.3, 0.5, 0.8], min_length=1)

    @field_validator("splits")
    @classmethod
    def _three_splits(cls, splits: Dict[str, float]) -> Dict[str, float]:
        if set(splits) != {"pretrain", "finetune", "test"}:
            raise ValueError("splits must be exactly pretrain, finetune and test")
        return splits


Arm = Callable[[AblationConfig, int, Dict[str, List[Document]]], float]


def _train_config(cfg: AblationConfig, seed: int, **model_update: Any) -> TrainConfig:
    return TrainConfig(
        seed=seed,
        model=cfg.model.model_copy(update={"seed": seed, **model_update}),
        data=DataConfig(train="<in-memory>"),
        pretrain=cfg.pretrain,
        finetune=cfg.finetune,
    )


def run_arm(
    train_config: TrainConfig,
    splits: Dict[str, List[Document]],
    pretrain: bool,
    metrics: Optional[TrainingMetrics] = None,
) -> float:
    """Optionally pre-train, then fine-tune and return test micro-F1."""
    trainer = Trainer(train_config, metrics)
    init = None
    if pretrain:
        init, _ = trainer.pretrain(splits["pretrain"])
    checkpoint, _ = trainer.finetune(init, splits["finetune"])
    return trainer.evaluate_checkpoint(checkpoint, splits["test"], "micro").f1


def corpus_splits(cfg: AblationConfig, seed: int) -> Dict[str, List[Document]]:
    corpus = generate_synthetic_corpus(cfg.corpus.model_copy(update={"seed": seed}))
    return split_corpus(corpus, cfg.splits)


def _with_pretrain(cfg: AblationConfig, **update: Any) -> AblationConfig:
    return cfg.model_copy(update={"pretrain": cfg.pretrain.model_copy(update=update)})


def gcl_arms(cfg: AblationConfig) -> Dict[str, Arm]:
    weights = cfg.pretrain.loss_weights
    mlm_only = _with_pretrain(cfg, loss_weights=weights.model_copy(update={"gcl": 0.0}))
    return {
        "mlm+gcl": lambda c, seed, splits: run_arm(
            _train_config(c, seed), splits, True
        ),
        "mlm": lambda c, seed, splits: run_arm(
            _train_config(mlm_only, seed), splits, True
        ),
    }


def image_arms(cfg: AblationConfig) -> Dict[str, Arm]:
    return {
        "text+layout": lambda c, seed, splits: run_arm(
            _train_config(c, seed, use_image=False), splits, False
        ),
        "text+layout+image": lambda c, seed, splits: run_arm(
            _train_config(c, seed, use_image=True), splits, False
        ),
    }


def decoupled_arms(cfg: AblationConfig) -> Dict[str, Arm]:
    arms: Dict[str, Arm] = {}
    for decoupled in (True, False):
        corruption = cfg.pretrain.corruption.model_copy(update={"decoupled": decoupled})
        variant = _with_pretrain(cfg, corruption=corruption)
        name = "decoupled" if decoupled else "shared"
        arms[name] = lambda c, seed, splits, v=variant: run_arm(
            _train_config(v, seed), splits, True
        )
    return arms


def drop_rate_arms(cfg: AblationConfig) -> Dict[str, Arm]:
    arms: Dict[str, Arm] = {}
    for rate in cfg.drop_rates:
        corruption = cfg.pretrain.corruption.model_copy(
            update={
                "edge_drop_rate": min(rate, 0.99),
                "layout_drop_rate": rate,
                "image_drop_rate": rate,
                "text_drop_rate": rate,
                "decoupled": False,
            }
        )
        variant = _with_pretrain(cfg, corruption=corruption)
        arms[f"rate={rate:g}"] = lambda c, seed, splits, v=variant: run_arm(
            _train_config(v, seed), splits, True
        )
    return arms


ARM_BUILDERS: Dict[str, Callable[[AblationConfig], Dict[str, Arm]]] = {
    "gcl": gcl_arms,
    "image": image_arms,
    "decoupled": decoupled_arms,
    "drop-rate": drop_rate_arms,
}


def run_ablation(
    name: str, cfg: AblationConfig, seeds: Optional[Sequence[int]] = None
) -> Dict[str, Any]:
    """Mean and per-seed micro-F1 of every arm of ablation ``name``."""
    if name not in ARM_BUILDERS:
        choices = ", ".join(ABLATIONS)
        raise ValueError(f"Unknown ablation {name!r}; choose from {choices}")
    seeds = list(cfg.seeds if seeds is None else seeds)
    if name == "image" and not cfg.corpus.visual_signal:
        logger.warning("Image ablation on a corpus without visual signal")
    arms = ARM_BUILDERS[name](cfg)
    scores: Dict[str, List[float]] = {arm: [] for arm in arms}
    for seed in seeds:
        splits = corpus_splits(cfg, seed)
        for arm, run in arms.items():
            f1 = run(cfg, seed, splits)
            scores[arm].append(f1)
            logger.info(f"ablation={name} arm={arm} seed={seed} f1={f1:.4f}")
    return {
        "ablation": name,
        "seeds": seeds,
        "mean_f1": {arm: float(np.mean(values)) for arm, values in scores.items()},
        "f1": scores,
    }
