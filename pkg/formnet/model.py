"""The form extraction network.

Token embeddings are contextualised by an edge-conditioned GCN over the
token graph (edges carry layout and, optionally, image features), a single
global token is prepended, and an ETC stack with Rich Attention produces the
final per-token states. Three heads sit on top: a weight-tied MLM head, a
contrastive projection head and a BIOES tagging head.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from .attention import EtcConfig, EtcLayer, TokenGeometry, etc_mask
from .core import functional as F
from .core.layers import Embedding, LayerNorm, Linear
from .core.module import Module
from .core.tensor import Tensor
from .data.documents import Document, Entity
from .data.mlm import MlmPlan, apply_mlm
from .data.vocab import GLOBAL_ID, NUM_RESERVED, Vocabulary
from .errors import DatasetError, ShapeError
from .graph import (
    DEFAULT_NEIGHBOURS,
    LAYOUT_DIM,
    DocGraph,
    GraphView,
    box_centers,
    build_graph,
    full_view,
    reverse_layout_features,
)
from .vision import (
    EdgeImageEncoder,
    ImageEmbedderConfig,
    ResizeTransform,
    resize_pad,
    union_box,
)

logger = logging.getLogger(__name__)

BIOES = ("B", "I", "E", "S")


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden: int = Field(default=64, gt=0)
    gcn_layers: int = Field(default=2, ge=0)
    gcn_heads: int = Field(default=1, ge=1, le=1)
    etc_layers: int = Field(default=2, ge=0)
    etc_heads: int = Field(default=4, gt=0)
    local_radius: int = Field(default=4, ge=1)
    num_global: int = Field(default=1, ge=1, le=1)
    max_seq_len: int = Field(default=128, gt=0)
    vocab_size: int = Field(default=1000, gt=NUM_RESERVED)
    labels: List[str] = Field(default=["header", "question", "answer", "other"])
    neighbours: int = Field(default=DEFAULT_NEIGHBOURS, ge=1)
    use_image: bool = True
    image: ImageEmbedderConfig = Field(default_factory=ImageEmbedderConfig)
    projection_dim: int = Field(default=128, gt=0)
    contrastive_tap: Literal["etc", "gcn"] = "etc"
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_dims(self) -> "ModelConfig":
        if self.hidden % self.etc_heads:
            raise ValueError(
                f"hidden {self.hidden} not divisible by {self.etc_heads} heads"
            )
        if len(set(self.labels)) != len(self.labels) or not self.labels:
            raise ValueError(f"labels must be non-empty and distinct: {self.labels}")
        return self

    @property
    def edge_dim(self) -> int:
        return LAYOUT_DIM + (self.image.output_dim if self.use_image else 0)

    @property
    def num_tags(self) -> int:
        return 1 + len(BIOES) * len(self.labels)

    def etc_config(self) -> EtcConfig:
        return EtcConfig(
            local_radius=self.local_radius,
            num_global=self.num_global,
            num_heads=self.etc_heads,
            hidden=self.hidden,
        )


@dataclass
class DocumentInput:
    """Everything the model consumes for one (possibly truncated) document."""

    doc_id: str
    token_ids: np.ndarray
    centers: np.ndarray
    graph: DocGraph
    entities: List[Entity]
    raster: Optional[np.ndarray] = None
    transform: Optional[ResizeTransform] = None
    union_boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))

    @property
    def num_tokens(self) -> int:
        return int(self.token_ids.shape[0])

    def geometry(self) -> TokenGeometry:
        """Geometry with the global token first at (0, 0)."""
        n = self.num_tokens
        return TokenGeometry(
            x=np.concatenate([[0.0], self.centers[:, 0]]),
            y=np.concatenate([[0.0], self.centers[:, 1]]),
            is_global=np.arange(n + 1) == 0,
        )


def prepare_document(
    doc: Document, vocab: Vocabulary, config: ModelConfig
) -> DocumentInput:
    """Encode ids, build the graph and resize the page of one document.

    Documents longer than ``max_seq_len`` keep their earliest tokens; entity
    spans reaching past the cut are dropped.
    """
    if not doc.tokens:
        raise DatasetError("document has no tokens", doc.id, ("tokens",))
    tokens = doc.tokens
    if len(tokens) > config.max_seq_len:
        logger.warning(
            f"Truncating document {doc.id} from {len(tokens)} to "
            f"{config.max_seq_len} tokens"
        )
        tokens = tokens[: config.max_seq_len]
    n = len(tokens)
    token_ids = vocab.encode(t.text for t in tokens)
    boxes = np.array([t.box for t in tokens], dtype=np.float64).reshape(-1, 4)
    graph = build_graph(
        boxes,
        config.neighbours,
        doc.page_width,
        doc.page_height,
        doc_id=doc.id,
        token_ids=token_ids,
    )
    raster: Optional[np.ndarray] = None
    transform: Optional[ResizeTransform] = None
    if config.use_image:
        if doc.image is None:
            raise DatasetError(
                "image modality enabled but no raster loaded", doc.id, ("image",)
            )
        raster, transform = resize_pad(doc.image, config.image.input_size)
    return DocumentInput(
        doc_id=doc.id,
        token_ids=token_ids,
        centers=box_centers(boxes),
        graph=graph,
        entities=[e for e in doc.entities if e.end < n],
        raster=raster,
        transform=transform,
        union_boxes=union_box(boxes[graph.edges[:, 0]], boxes[graph.edges[:, 1]]),
    )


class GcnLayer(Module):
    """Edge-conditioned graph convolution with mean aggregation.

    Every undirected edge sends a message each way. The receiver ``i`` of a
    message from ``j`` sees ``GELU(W [h_i; h_j; e_ij] + b)`` where ``e_ij``
    uses the layout features of the ``(i, j)`` direction.
    """

    def __init__(self, name: str, seed: int, hidden: int, edge_dim: int) -> None:
        super().__init__(name, seed)
        self.hidden = hidden
        self.edge_dim = edge_dim
        self.message = Linear(
            self.child_name("message"), seed, 2 * hidden + edge_dim, hidden
        )
        self.norm = LayerNorm(self.child_name("norm"), seed, hidden)

    def __call__(self, h: Tensor, edges: np.ndarray, edge_feat: Tensor) -> Tensor:
        n = h.shape[0]
        if edge_feat.shape != (2 * edges.shape[0], self.edge_dim):
            expected = (2 * edges.shape[0], self.edge_dim)
            raise ShapeError("gcn edge features", edge_feat.shape, expected)
        if edges.shape[0] == 0:
            return self.norm(h)
        receivers = np.concatenate([edges[:, 0], edges[:, 1]])
        senders = np.concatenate([edges[:, 1], edges[:, 0]])
        inputs = F.concat(
            [F.gather_rows(h, receivers), F.gather_rows(h, senders), edge_feat], axis=-1
        )
        messages = F.gelu(self.message(inputs))
        return self.norm(h + F.scatter_mean(messages, receivers, n))


class FormNetModel(Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__("", config.seed)
        self.config = config
        seed = config.seed
        hidden = config.hidden
        self.embedding = Embedding("embeddings.token", seed, config.vocab_size, hidden)
        self.image_encoder: Optional[EdgeImageEncoder] = (
            EdgeImageEncoder("image", seed, config.image) if config.use_image else None
        )
        self.gcn = [
            GcnLayer(f"gcn.{i}", seed, hidden, config.edge_dim)
            for i in range(config.gcn_layers)
        ]
        etc_cfg = config.etc_config()
        self.etc = [
            EtcLayer(f"etc.{i}", seed, etc_cfg) for i in range(config.etc_layers)
        ]
        self.mlm_bias = self.parameter("heads.mlm.bias", (config.vocab_size,), "bias")
        self.projection_in = Linear("heads.projection.in", seed, hidden, hidden)
        self.projection_out = Linear(
            "heads.projection.out", seed, hidden, config.projection_dim
        )
        self.tag_head = Linear("heads.tags", seed, hidden, config.num_tags)

    def edge_image_features(self, inp: DocumentInput) -> Optional[Tensor]:
        """Image vector of every graph edge on the current embedder weights."""
        if self.image_encoder is None:
            return None
        assert inp.raster is not None and inp.transform is not None
        return self.image_encoder(
            inp.raster, inp.transform, inp.union_boxes, inp.graph.edges
        )

    def edge_features(
        self, view: GraphView, image_feats: Optional[Tensor]
    ) -> Tensor:
        """Both-direction edge features ``[layout ; image]`` of a view."""
        reverse = reverse_layout_features(view.layout_feat)
        layout = np.concatenate([view.layout_feat, reverse])
        if not self.config.use_image:
            return Tensor(layout)
        if image_feats is None:
            raise ValueError("image modality enabled but no edge image features given")
        kept = F.scale_rows(
            F.gather_rows(image_feats, view.edge_index),
            view.image_kept.astype(np.float64),
        )
        image = F.concat([kept, kept], axis=0)
        return F.concat([Tensor(layout), image], axis=-1)

    def gcn_forward(
        self, node_embeds: Tensor, view: GraphView, edge_feat: Tensor
    ) -> Tensor:
        if node_embeds.shape[0] != view.num_nodes:
            raise ShapeError("gcn nodes", node_embeds.shape, (view.num_nodes,))
        h = node_embeds
        for layer in self.gcn:
            h = layer(h, view.edges, edge_feat)
        return h

    def _stages(
        self,
        inp: DocumentInput,
        view: GraphView,
        image_feats: Optional[Tensor],
        node_ids: Optional[np.ndarray] = None,
    ) -> Tuple[Tensor, Tensor]:
        if inp.num_tokens == 0:
            raise DatasetError("cannot encode an empty document", inp.doc_id)
        ids = inp.token_ids if node_ids is None else node_ids
        embeds = F.scale_rows(self.embedding(ids), view.text_kept.astype(np.float64))
        edge_feat = self.edge_features(view, image_feats)
        supertokens = self.gcn_forward(embeds, view, edge_feat)
        h = F.concat([self.embedding(np.array([GLOBAL_ID])), supertokens], axis=0)
        geometry = inp.geometry()
        mask = etc_mask(inp.num_tokens + 1, self.config.etc_config())
        for layer in self.etc:
            h = layer(h, geometry, mask)
        return supertokens, h[1:]

    def encode(
        self,
        inp: DocumentInput,
        view: Optional[GraphView] = None,
        image_feats: Optional[Tensor] = None,
        node_ids: Optional[np.ndarray] = None,
    ) -> Tensor:
        """Final per-token states (global position removed)."""
        if view is None:
            view = full_view(inp.graph)
        if image_feats is None and self.config.use_image:
            image_feats = self.edge_image_features(inp)
        return self._stages(inp, view, image_feats, node_ids)[1]

    def forward_mlm(
        self, inp: DocumentInput, plan: MlmPlan, image_feats: Optional[Tensor] = None
    ) -> Tensor:
        """Vocabulary logits at the plan positions.

        Plan replacements change node text only; edge features are untouched.
        """
        if len(plan) == 0:
            return Tensor(np.zeros((0, self.config.vocab_size)))
        ids = apply_mlm(plan, inp.token_ids)
        hidden = self.encode(inp, full_view(inp.graph), image_feats, node_ids=ids)
        picked = F.gather_rows(hidden, plan.positions)
        return F.matmul(picked, F.transpose(self.embedding.weight)) + self.mlm_bias

    def forward_contrastive(
        self, inp: DocumentInput, view: GraphView, image_feats: Optional[Tensor] = None
    ) -> Tensor:
        """Unit-norm projected node embeddings of a corrupted view."""
        if image_feats is None and self.config.use_image:
            image_feats = self.edge_image_features(inp)
        gcn_out, etc_out = self._stages(inp, view, image_feats)
        z = etc_out if self.config.contrastive_tap == "etc" else gcn_out
        projected = self.projection_out(F.gelu(self.projection_in(z)))
        return F.l2_normalize(projected, axis=-1)

    def forward_tags(
        self, inp: DocumentInput, image_feats: Optional[Tensor] = None
    ) -> Tensor:
        return self.tag_head(self.encode(inp, full_view(inp.graph), image_feats))

    def keep_attention(self, enabled: bool) -> None:
        for layer in self.etc:
            layer.keep_attention = enabled


def _linear_params(fan_in: int, fan_out: int) -> int:
    return fan_in * fan_out + fan_out


def _conv_params(channels: List[int], kernel: int) -> int:
    return sum(
        kernel * kernel * c_in * c_out + c_out
        for c_in, c_out in zip(channels, channels[1:])
    )


def count_parameters(config: ModelConfig) -> int:
    """Parameter count of :class:`FormNetModel` without building it."""
    h = config.hidden
    v = config.vocab_size
    dh = h // config.etc_heads
    linear = _linear_params
    total = v * h + v
    total += config.gcn_layers * (linear(2 * h + config.edge_dim, h) + 2 * h)
    head = 2 * 2 * linear(2 * dh, 1) + 2
    etc_layer = 4 * linear(h, h) + config.etc_heads * head + 4 * h
    etc_layer += linear(h, 2 * h) + linear(2 * h, h)
    total += config.etc_layers * etc_layer
    total += linear(h, h) + linear(h, config.projection_dim)
    total += linear(h, config.num_tags)
    if config.use_image:
        image = config.image
        total += _conv_params([1] + list(image.backbone_filters), image.kernel_size)
        total += _conv_params(
            [image.backbone_filters[-1]] + list(image.refiner_filters),
            image.kernel_size,
        )
    return total
