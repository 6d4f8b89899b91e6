"""Pre-training and fine-tuning losses."""

import logging
from typing import Dict, Literal, Optional, Tuple
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from .core import functional as F
from .core.tensor import Tensor
from .data.mlm import MlmPlan
from .graph import CorruptionConfig, corrupt_pair
from .model import DocumentInput, FormNetModel

logger = logging.getLogger(__name__)

Reduction = Literal["mean", "none"]


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mlm: float = Field(default=1.0, ge=0.0)
    gcl: float = Field(default=0.5, ge=0.0)
    temperature: float = Field(default=0.1, gt=0.0)


def mlm_loss(logits: Tensor, original_ids: np.ndarray) -> Tensor:
    """Mean cross-entropy over plan positions; 0 for an empty plan."""
    return F.cross_entropy(logits, original_ids)


def tag_loss(logits: Tensor, tag_ids: np.ndarray) -> Tensor:
    return F.cross_entropy(logits, tag_ids)


def nt_xent(
    z1: Tensor, z2: Tensor, temperature: float, reduction: Reduction = "mean"
) -> Tensor:
    """Normalised temperature-scaled cross-entropy between two views.

    Row ``i`` of ``z1`` and row ``i`` of ``z2`` are positives. Every anchor is
    contrasted with all other ``2N - 1`` rows of both views, and the loss is
    the mean over the ``2N`` anchors. Rows are expected to have unit norm.
    ``reduction="none"`` returns the ``2N`` per-anchor losses, ``z1`` rows
    first.
    """
    if z1.shape != z2.shape:
        raise ValueError(f"view embeddings differ in shape: {z1.shape} vs {z2.shape}")
    n = z1.shape[0]
    if n < 2:
        raise ValueError(f"nt_xent needs at least 2 nodes for negatives, got {n}")
    z = F.concat([z1, z2], axis=0)
    sims = F.matmul(z, F.transpose(z)) * (1.0 / temperature)
    candidates = ~np.eye(2 * n, dtype=bool)
    log_probs = F.log_softmax(sims, axis=-1, mask=candidates)
    anchors = np.arange(2 * n)
    positives = np.concatenate([np.arange(n, 2 * n), np.arange(n)])
    per_anchor = F.neg(log_probs[anchors, positives])
    if reduction == "none":
        return per_anchor
    return F.mean(per_anchor)


def pretrain_loss(
    model: FormNetModel,
    inp: DocumentInput,
    plan: MlmPlan,
    corruption: CorruptionConfig,
    weights: LossWeights,
    image_feats: Optional[Tensor] = None,
) -> Tuple[Tensor, Dict[str, float]]:
    """Weighted MLM (uncorrupted graph) plus graph-contrastive loss.

    The contrastive term is skipped when its weight is zero or the document
    has a single token.
    """
    if image_feats is None and model.config.use_image:
        image_feats = model.edge_image_features(inp)
    mlm = mlm_loss(model.forward_mlm(inp, plan, image_feats), plan.original_ids)
    total = mlm * weights.mlm
    gcl_value = 0.0
    if weights.gcl > 0 and inp.num_tokens >= 2:
        first, second = corrupt_pair(inp.graph, corruption)
        z1 = model.forward_contrastive(inp, first, image_feats)
        z2 = model.forward_contrastive(inp, second, image_feats)
        gcl = nt_xent(z1, z2, weights.temperature)
        gcl_value = gcl.item()
        total = total + gcl * weights.gcl
    report = {"mlm_loss": mlm.item(), "gcl_loss": gcl_value, "total": total.item()}
    logger.debug(
        f"doc={inp.doc_id} mlm={report['mlm_loss']:.4f} gcl={gcl_value:.4f} "
        f"total={report['total']:.4f}"
    )
    return total, report
