"""Token graphs, layout edge features and corrupted graph views.

Every token proposes its K nearest other tokens (box-center distance, ties
to the smaller index); proposals are merged into undirected edges ``(i, j)``
with ``i < j``. Views used for contrastive pre-training drop edges and zero
whole feature vectors per edge (layout, image) or per node (text).
"""

import logging
import zlib
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from .errors import GraphError, ShapeError

logger = logging.getLogger(__name__)

LAYOUT_DIM = 8
DEFAULT_NEIGHBOURS = 8


@dataclass
class DocGraph:
    doc_id: str
    num_nodes: int
    edges: np.ndarray
    layout_feat: np.ndarray
    boxes: np.ndarray
    node_token_ids: np.ndarray
    page_width: int
    page_height: int
    image_feat: Optional[np.ndarray] = None

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.num_nodes)


class CorruptionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    edge_drop_rate: float = Field(default=0.3, ge=0.0, lt=1.0)
    layout_drop_rate: float = Field(default=0.8, ge=0.0, le=1.0)
    image_drop_rate: float = Field(default=0.8, ge=0.0, le=1.0)
    text_drop_rate: float = Field(default=0.8, ge=0.0, le=1.0)
    decoupled: bool = True
    seed: int = Field(default=0, ge=0)

    def feature_rates(self, view: int) -> Tuple[float, float, float]:
        """(layout, image, text) drop rates of view 0 or 1."""
        rates = (self.layout_drop_rate, self.image_drop_rate, self.text_drop_rate)
        if view == 1 and self.decoupled:
            return tuple(1.0 - r for r in rates)  # type: ignore[return-value]
        return rates


@dataclass
class GraphView:
    """A graph whose edges are a subset of the parent's and whose dropped
    features are zero vectors. Nodes are never removed."""

    num_nodes: int
    edges: np.ndarray
    edge_index: np.ndarray
    layout_feat: np.ndarray
    layout_kept: np.ndarray
    image_kept: np.ndarray
    text_kept: np.ndarray
    node_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])


def box_centers(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    return np.stack(
        [(boxes[:, 0] + boxes[:, 2]) / 2.0, (boxes[:, 1] + boxes[:, 3]) / 2.0], axis=1
    )


def nearest_neighbour_edges(centers: np.ndarray, k: int) -> np.ndarray:
    n = centers.shape[0]
    if k < 1:
        raise GraphError(f"K must be at least 1, got {k}")
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    np.fill_diagonal(dist, np.inf)
    take = min(k, n - 1)
    proposals = set()
    for i in range(n):
        for j in np.argsort(dist[i], kind="stable")[:take]:
            proposals.add((min(i, int(j)), max(i, int(j))))
    return np.array(sorted(proposals), dtype=np.int64).reshape(-1, 2)


def layout_edge_features(
    boxes: np.ndarray,
    edges: np.ndarray,
    page_width: float,
    page_height: float,
) -> np.ndarray:
    """Layout vector of every edge ``(i, j)``.

    ``[dcx/W, dcy/H, ln(1 + dist), w_i/W, h_i/H, w_j/W, h_j/H, (j - i)/n]``
    with center deltas taken as ``center(j) - center(i)`` in pixels.
    """
    if page_width <= 0 or page_height <= 0:
        raise GraphError(
            f"page dimensions must be positive, got {page_width}x{page_height}"
        )
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if edges.shape[0] == 0:
        return np.zeros((0, LAYOUT_DIM))
    centers = box_centers(boxes)
    i, j = edges[:, 0], edges[:, 1]
    delta = centers[j] - centers[i]
    widths = boxes[:, 2] - boxes[:, 0]
    heights = boxes[:, 3] - boxes[:, 1]
    return np.stack(
        [
            delta[:, 0] / page_width,
            delta[:, 1] / page_height,
            np.log1p(np.sqrt((delta**2).sum(axis=1))),
            widths[i] / page_width,
            heights[i] / page_height,
            widths[j] / page_width,
            heights[j] / page_height,
            (j - i) / float(boxes.shape[0]),
        ],
        axis=1,
    )


def reverse_layout_features(features: np.ndarray) -> np.ndarray:
    """Features of ``(j, i)`` given those of ``(i, j)``."""
    features = np.asarray(features)
    reverse = features[:, [0, 1, 2, 5, 6, 3, 4, 7]].copy()
    reverse[:, [0, 1, 7]] *= -1.0
    return reverse


def build_graph(
    boxes: np.ndarray,
    k: int = DEFAULT_NEIGHBOURS,
    page_width: int = 1,
    page_height: int = 1,
    doc_id: str = "",
    token_ids: Optional[np.ndarray] = None,
) -> DocGraph:
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    n = boxes.shape[0]
    if n < 1:
        raise GraphError(f"document {doc_id} has no tokens")
    edges = nearest_neighbour_edges(box_centers(boxes), k)
    graph = DocGraph(
        doc_id=doc_id,
        num_nodes=n,
        edges=edges,
        layout_feat=layout_edge_features(boxes, edges, page_width, page_height),
        boxes=boxes,
        node_token_ids=(
            np.zeros(n, dtype=np.int64)
            if token_ids is None
            else np.asarray(token_ids, dtype=np.int64)
        ),
        page_width=page_width,
        page_height=page_height,
    )
    logger.debug(f"Built graph doc={doc_id} nodes={n} edges={graph.num_edges} k={k}")
    return graph


def full_view(graph: DocGraph) -> GraphView:
    """The uncorrupted graph as a view with every feature kept."""
    e = graph.num_edges
    return GraphView(
        num_nodes=graph.num_nodes,
        edges=graph.edges,
        edge_index=np.arange(e, dtype=np.int64),
        layout_feat=graph.layout_feat,
        layout_kept=np.ones(e, dtype=bool),
        image_kept=np.ones(e, dtype=bool),
        text_kept=np.ones(graph.num_nodes, dtype=bool),
        node_index=np.arange(graph.num_nodes, dtype=np.int64),
    )


def _sample_view(
    graph: DocGraph, cfg: CorruptionConfig, view: int, rng: np.random.Generator
) -> GraphView:
    layout_rate, image_rate, text_rate = cfg.feature_rates(view)
    e = graph.num_edges
    edge_kept = rng.random(e) >= cfg.edge_drop_rate
    layout_kept = rng.random(e) >= layout_rate
    image_kept = rng.random(e) >= image_rate
    text_kept = rng.random(graph.num_nodes) >= text_rate
    index = np.flatnonzero(edge_kept).astype(np.int64)
    layout_mask = layout_kept[index]
    return GraphView(
        num_nodes=graph.num_nodes,
        edges=graph.edges[index],
        edge_index=index,
        layout_feat=graph.layout_feat[index] * layout_mask[:, None],
        layout_kept=layout_mask,
        image_kept=image_kept[index],
        text_kept=text_kept,
        node_index=np.arange(graph.num_nodes, dtype=np.int64),
    )


def corrupt_pair(graph: DocGraph, cfg: CorruptionConfig) -> Tuple[GraphView, GraphView]:
    """Two independently corrupted views of ``graph``.

    Both views drop edges at ``edge_drop_rate``. Feature channels use rate p
    in the first view and ``1 - p`` in the second when ``decoupled``. The
    pair is a function of ``(graph, cfg)`` only.
    """
    doc_key = zlib.crc32(graph.doc_id.encode("utf-8"))
    sequence = np.random.SeedSequence([cfg.seed, doc_key])
    first, second = (np.random.default_rng(s) for s in sequence.spawn(2))
    return _sample_view(graph, cfg, 0, first), _sample_view(graph, cfg, 1, second)


def graph_to_dict(
    graph: DocGraph, image_feat: Optional[np.ndarray] = None
) -> Dict[str, Any]:
    """JSON-ready dump of nodes, edges and layout features.

    ``image_feat`` holds one row per edge and is added under ``"image"``.
    """
    edges: List[Dict[str, Any]] = [
        {"i": int(i), "j": int(j), "layout": [float(v) for v in feat]}
        for (i, j), feat in zip(graph.edges, graph.layout_feat)
    ]
    if image_feat is not None:
        if image_feat.shape[0] != graph.num_edges:
            raise ShapeError("graph_to_dict", image_feat.shape, (graph.num_edges,))
        for edge, row in zip(edges, image_feat):
            edge["image"] = [float(v) for v in row]
    return {
        "doc_id": graph.doc_id,
        "num_nodes": graph.num_nodes,
        "nodes": [
            {
                "index": i,
                "token_id": int(graph.node_token_ids[i]),
                "box": [float(v) for v in graph.boxes[i]],
            }
            for i in range(graph.num_nodes)
        ],
        "edges": edges,
    }
