"""JSON dumps of intermediate structures for one document."""

import logging
from typing import Any, Dict, Optional
import numpy as np
from .checkpoint import Checkpoint, build_model
from .data.documents import Document
from .data.vocab import Vocabulary
from .errors import GraphError
from .graph import graph_to_dict
from .model import ModelConfig, prepare_document

logger = logging.getLogger(__name__)


def inspect_graph(
    doc: Document,
    vocab: Vocabulary,
    config: ModelConfig,
    checkpoint: Optional[Checkpoint] = None,
) -> Dict[str, Any]:
    """The token graph of ``doc`` with token texts attached to the nodes.

    Edges also carry their image feature vector when ``checkpoint`` was
    trained with the image modality and the document has a raster.
    """
    if checkpoint is not None and checkpoint.config.use_image and doc.image is not None:
        inp = prepare_document(doc, checkpoint.vocab, checkpoint.config)
        features = build_model(checkpoint).edge_image_features(inp)
        assert features is not None
        payload = graph_to_dict(inp.graph, features.data)
    else:
        text_only = config.model_copy(update={"use_image": False})
        payload = graph_to_dict(prepare_document(doc, vocab, text_only).graph)
    for node in payload["nodes"]:
        node["text"] = doc.tokens[node["index"]].text
    return payload


def inspect_attention(
    checkpoint: Checkpoint, doc: Document, layer: Optional[int] = None
) -> Dict[str, Any]:
    """Attention probabilities between page tokens for every layer and head.

    Rows and columns of the global token are left out.
    """
    model = build_model(checkpoint)
    inp = prepare_document(doc, checkpoint.vocab, checkpoint.config)
    layers = range(len(model.etc)) if layer is None else [layer]
    if any(not 0 <= i < len(model.etc) for i in layers):
        raise ValueError(f"layer {layer} outside 0..{len(model.etc) - 1}")
    model.keep_attention(True)
    try:
        model.forward_tags(inp)
        dumps = [
            {
                "layer": i,
                "heads": [
                    np.round(weights[1:, 1:], 6).tolist()
                    for weights in model.etc[i].last_attention
                ],
            }
            for i in layers
        ]
    finally:
        model.keep_attention(False)
    logger.info(f"Captured attention doc={doc.id} layers={len(dumps)}")
    return {
        "doc_id": doc.id,
        "tokens": [t.text for t in doc.tokens[: inp.num_tokens]],
        "layers": dumps,
    }


def inspect_edge_image(
    checkpoint: Checkpoint, doc: Document, i: int, j: int
) -> Dict[str, Any]:
    """Union box and image feature vector of the edge between tokens i and j."""
    if not checkpoint.config.use_image:
        raise ValueError("checkpoint was trained without the image modality")
    inp = prepare_document(doc, checkpoint.vocab, checkpoint.config)
    lo, hi = min(i, j), max(i, j)
    edges = inp.graph.edges
    matches = np.flatnonzero((edges[:, 0] == lo) & (edges[:, 1] == hi))
    if matches.size == 0:
        raise GraphError(f"({i}, {j}) is not an edge of document {doc.id}")
    index = int(matches[0])
    features = build_model(checkpoint).edge_image_features(inp)
    assert features is not None
    return {
        "doc_id": doc.id,
        "i": lo,
        "j": hi,
        "union_box": [float(v) for v in inp.union_boxes[index]],
        "dim": int(features.shape[1]),
        "features": [float(v) for v in features.data[index]],
    }
