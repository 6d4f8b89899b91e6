"""Tests for the graph module."""

import math
import numpy as np
import pytest
from pydantic import ValidationError
from formnet.errors import GraphError, ShapeError
from formnet.graph import (
    LAYOUT_DIM,
    CorruptionConfig,
    DocGraph,
    build_graph,
    corrupt_pair,
    full_view,
    graph_to_dict,
    layout_edge_features,
    nearest_neighbour_edges,
    reverse_layout_features,
)


def point_boxes(centers):
    """Zero-size boxes at the given centers."""
    return np.array([[x, y, x, y] for x, y in centers], dtype=float)


@pytest.fixture
def big_graph():
    """A 10,000-node, 10,000-edge graph for drop-rate statistics."""
    rng = np.random.default_rng(0)
    n = 10_000
    edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    edges = np.concatenate([edges, [[0, n - 1]]])
    return DocGraph(
        doc_id="big",
        num_nodes=n,
        edges=edges,
        layout_feat=rng.normal(size=(n, LAYOUT_DIM)) + 5.0,
        boxes=np.zeros((n, 4)),
        node_token_ids=np.full(n, 7),
        page_width=100,
        page_height=100,
    )


def test_nearest_neighbour_example():
    """Test the three-point example with K=1."""
    graph = build_graph(point_boxes([(0, 0), (1, 0), (5, 0)]), k=1)
    assert graph.edges.tolist() == [[0, 1], [1, 2]]


def test_single_and_pair_graphs():
    """Test the degenerate sizes."""
    assert build_graph(point_boxes([(3, 3)]), k=4).num_edges == 0
    for k in (1, 2, 8):
        assert build_graph(point_boxes([(0, 0), (9, 9)]), k=k).edges.tolist() == [
            [0, 1]
        ]


def test_empty_document_and_bad_k():
    """Test the input checks."""
    with pytest.raises(GraphError):
        build_graph(np.zeros((0, 4)))
    with pytest.raises(GraphError):
        nearest_neighbour_edges(np.zeros((3, 2)), 0)


def test_ties_go_to_smaller_index():
    """Test that equidistant candidates resolve to the smaller token index."""
    centers = np.array([[1.0, 0.0], [0.0, 0.0], [2.0, 0.0]])
    proposals = nearest_neighbour_edges(centers, 1)
    # node 0 is equidistant from 1 and 2 and proposes 1; 1 and 2 each propose 0
    assert proposals.tolist() == [[0, 1], [0, 2]]


def test_edges_are_canonical():
    """Test edge ordering, uniqueness and the per-node proposal bound."""
    rng = np.random.default_rng(1)
    centers = rng.uniform(0, 100, size=(40, 2))
    k = 3
    edges = nearest_neighbour_edges(centers, k)
    assert np.all(edges[:, 0] < edges[:, 1])
    assert len({tuple(e) for e in edges.tolist()}) == len(edges)
    assert len(edges) <= 40 * k
    dist = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
    np.fill_diagonal(dist, np.inf)
    edge_set = {tuple(e) for e in edges.tolist()}
    for i in range(40):
        for j in np.argsort(dist[i], kind="stable")[:k]:
            assert (min(i, j), max(i, j)) in edge_set


def test_layout_features_example():
    """Test the formula on centers 7 px apart on a 700 px page."""
    boxes = np.array([[0, 0, 10, 10], [7, 0, 17, 10]], dtype=float)
    feat = layout_edge_features(boxes, np.array([[0, 1]]), 700, 100)[0]
    assert feat[0] == pytest.approx(0.01)
    assert feat[1] == pytest.approx(0.0)
    assert feat[2] == pytest.approx(math.log(8.0))
    assert feat[3:7] == pytest.approx([10 / 700, 0.1, 10 / 700, 0.1])
    assert feat[7] == pytest.approx(0.5)


def test_layout_features_identical_boxes():
    """Test that coincident boxes give zero offsets and distance."""
    boxes = np.array([[4, 4, 8, 8], [4, 4, 8, 8]], dtype=float)
    feat = layout_edge_features(boxes, np.array([[0, 1]]), 50, 50)[0]
    assert feat[:3].tolist() == [0.0, 0.0, 0.0]


def test_layout_features_swap_symmetry():
    """Test that swapping endpoints matches reverse_layout_features."""
    boxes = np.random.default_rng(2).uniform(0, 50, size=(5, 4))
    boxes[:, 2:] += boxes[:, :2]
    forward = layout_edge_features(boxes, np.array([[1, 3]]), 120, 90)
    backward = layout_edge_features(boxes, np.array([[3, 1]]), 120, 90)
    np.testing.assert_allclose(reverse_layout_features(forward), backward)
    np.testing.assert_allclose(backward[0, [0, 1, 7]], -forward[0, [0, 1, 7]])
    assert backward[0, 2] == pytest.approx(forward[0, 2])


def test_layout_features_zero_page():
    """Test that a zero page dimension is an error."""
    with pytest.raises(GraphError):
        layout_edge_features(np.zeros((2, 4)), np.array([[0, 1]]), 0, 10)


def test_identity_corruption_equals_parent(tiny_inputs):
    """Test that zero rates without decoupling reproduce the graph."""
    graph = tiny_inputs[0].graph
    cfg = CorruptionConfig(
        edge_drop_rate=0.0,
        layout_drop_rate=0.0,
        image_drop_rate=0.0,
        text_drop_rate=0.0,
        decoupled=False,
    )
    first, _ = corrupt_pair(graph, cfg)
    reference = full_view(graph)
    np.testing.assert_array_equal(first.edges, graph.edges)
    np.testing.assert_array_equal(first.layout_feat, reference.layout_feat)
    assert first.layout_kept.all() and first.image_kept.all() and first.text_kept.all()


def test_text_complement(tiny_inputs):
    """Test that p_text=1 drops every node in view 1 and none in view 2."""
    cfg = CorruptionConfig(text_drop_rate=1.0, decoupled=True)
    first, second = corrupt_pair(tiny_inputs[0].graph, cfg)
    assert not first.text_kept.any()
    assert second.text_kept.all()


def test_views_are_subgraphs(tiny_inputs):
    """Test that views keep all nodes and a subset of edges."""
    for inp in tiny_inputs:
        graph = inp.graph
        for view in corrupt_pair(graph, CorruptionConfig(seed=3)):
            assert view.num_nodes == graph.num_nodes
            np.testing.assert_array_equal(view.edges, graph.edges[view.edge_index])
            kept = view.layout_kept
            np.testing.assert_array_equal(
                view.layout_feat[kept], graph.layout_feat[view.edge_index][kept]
            )
            assert np.all(view.layout_feat[~kept] == 0.0)


def test_corruption_is_deterministic(tiny_inputs):
    """Test that the same graph and config give the same views."""
    graph = tiny_inputs[1].graph
    cfg = CorruptionConfig(seed=11)
    a1, a2 = corrupt_pair(graph, cfg)
    b1, b2 = corrupt_pair(graph, cfg)
    for a, b in ((a1, b1), (a2, b2)):
        np.testing.assert_array_equal(a.edge_index, b.edge_index)
        np.testing.assert_array_equal(a.layout_feat, b.layout_feat)
        np.testing.assert_array_equal(a.image_kept, b.image_kept)
        np.testing.assert_array_equal(a.text_kept, b.text_kept)


def test_edge_drop_rate(big_graph):
    """Test the kept-edge fraction of both views at p_e=0.3."""
    for view in corrupt_pair(big_graph, CorruptionConfig(edge_drop_rate=0.3)):
        assert view.num_edges / big_graph.num_edges == pytest.approx(0.7, abs=0.016)


def test_decoupled_drop_fractions_sum_to_one(big_graph):
    """Test that complementary rates split each channel between the views."""
    cfg = CorruptionConfig(edge_drop_rate=0.0, decoupled=True, seed=5)
    first, second = corrupt_pair(big_graph, cfg)
    for channel in ("layout_kept", "image_kept", "text_kept"):
        dropped = [1.0 - getattr(v, channel).mean() for v in (first, second)]
        assert dropped[0] == pytest.approx(0.8, abs=0.016)
        assert sum(dropped) == pytest.approx(1.0, abs=0.02)


def test_shared_rates_without_decoupling(big_graph):
    """Test that both views use p when decoupling is off."""
    cfg = CorruptionConfig(edge_drop_rate=0.0, decoupled=False, text_drop_rate=0.2)
    first, second = corrupt_pair(big_graph, cfg)
    assert 1.0 - first.text_kept.mean() == pytest.approx(0.2, abs=0.016)
    assert 1.0 - second.text_kept.mean() == pytest.approx(0.2, abs=0.016)


def test_corruption_config_ranges():
    """Test the defaults and the rate bounds."""
    cfg = CorruptionConfig()
    assert cfg.feature_rates(0) == (0.8, 0.8, 0.8)
    assert cfg.feature_rates(1) == pytest.approx((0.2, 0.2, 0.2))
    with pytest.raises(ValidationError):
        CorruptionConfig(edge_drop_rate=1.0)
    with pytest.raises(ValidationError):
        CorruptionConfig(text_drop_rate=1.5)


def test_graph_to_dict(hand_document):
    """Test the JSON dump of a graph."""
    boxes = hand_document.boxes
    graph = build_graph(boxes, k=1, page_width=100, page_height=60, doc_id="hand-0")
    payload = graph_to_dict(graph)
    assert payload["num_nodes"] == 4
    assert [n["index"] for n in payload["nodes"]] == [0, 1, 2, 3]
    assert payload["nodes"][2]["box"] == [50.0, 10.0, 70.0, 20.0]
    assert {(e["i"], e["j"]) for e in payload["edges"]} == {(0, 1), (2, 3)}
    assert all(len(e["layout"]) == LAYOUT_DIM for e in payload["edges"])
    assert all("image" not in e for e in payload["edges"])


def test_graph_to_dict_with_image_features(hand_document):
    """Test that image rows are attached to edges in edge order."""
    boxes = hand_document.boxes
    graph = build_graph(boxes, k=1, page_width=100, page_height=60, doc_id="hand-0")
    rows = np.arange(2 * 3, dtype=float).reshape(2, 3)
    payload = graph_to_dict(graph, rows)
    assert [e["image"] for e in payload["edges"]] == rows.tolist()
    with pytest.raises(ShapeError):
        graph_to_dict(graph, rows[:1])
