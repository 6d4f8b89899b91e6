"""Tests for the synthetic form generator."""

import numpy as np
import pytest
from pydantic import ValidationError
from formnet.data.documents import dumps_dataset, load_dataset
from formnet.data.synthetic import (
    OUTSIDE_INK,
    PLAIN_INK,
    ROLE_INK,
    SyntheticFormSpec,
    generate_synthetic_corpus,
    render_page,
    split_corpus,
    token_roles,
    write_corpus,
)
from formnet.errors import ConfigError


def test_generation_is_deterministic(tiny_spec, tmp_path):
    """Test that one spec always yields byte-identical files."""
    first = write_corpus(generate_synthetic_corpus(tiny_spec), tmp_path / "a", "train")
    second = write_corpus(generate_synthetic_corpus(tiny_spec), tmp_path / "b", "train")
    assert first.read_bytes() == second.read_bytes()
    for image in sorted((tmp_path / "a" / "images").iterdir()):
        twin = tmp_path / "b" / "images" / image.name
        assert image.read_bytes() == twin.read_bytes()


def test_seed_changes_the_corpus(tiny_spec):
    """Test that another seed gives other documents."""
    other = tiny_spec.model_copy(update={"seed": 1})
    a = dumps_dataset(generate_synthetic_corpus(tiny_spec))
    b = dumps_dataset(generate_synthetic_corpus(other))
    assert a != b


def test_zero_documents(tiny_spec):
    """Test that an empty corpus is allowed."""
    spec = tiny_spec.model_copy(update={"num_documents": 0})
    assert generate_synthetic_corpus(spec) == []


def test_documents_are_valid(tiny_docs, tiny_spec):
    """Test token and entity invariants of generated documents."""
    assert len(tiny_docs) == tiny_spec.num_documents
    for doc in tiny_docs:
        assert doc.id.startswith("synth-0-")
        assert [t.index for t in doc.tokens] == list(range(len(doc.tokens)))
        for token in doc.tokens:
            x0, y0, x1, y1 = token.box
            assert 0 <= x0 <= x1 <= doc.page_width
            assert 0 <= y0 <= y1 <= doc.page_height
        spans = sorted((e.start, e.end) for e in doc.entities)
        for (_, end), (start, _) in zip(spans, spans[1:]):
            assert start > end
        assert {e.label for e in doc.entities} <= set(tiny_spec.labels)
        assert doc.entities[0].label == "header"
        assert doc.image.shape == (doc.page_height, doc.page_width)
        assert doc.image.min() >= 0.0 and doc.image.max() <= 1.0


def test_label_intensity_encodes_roles(tiny_docs, tiny_spec):
    """Test that each token is filled with the ink of its role."""
    doc = tiny_docs[0]
    roles = token_roles(doc, tiny_spec.labels)
    for token, role in zip(doc.tokens, roles):
        x0, y0, x1, y1 = token.box
        ink = OUTSIDE_INK if role is None else ROLE_INK[role]
        assert doc.image[(y0 + y1) // 2, (x0 + x1) // 2] == pytest.approx(ink / 255)


def test_raster_ignores_labels_without_visual_signal():
    """Test that rasters depend only on layout when visual signal is off."""
    boxes = [(2, 2, 12, 8), (20, 2, 30, 8)]
    plain_a = render_page(40, 12, boxes, [1, 2], [], label_intensity=False)
    plain_b = render_page(40, 12, boxes, [2, None], [], label_intensity=False)
    np.testing.assert_array_equal(plain_a, plain_b)
    assert plain_a[5, 5] == pytest.approx(PLAIN_INK / 255)
    coded_a = render_page(40, 12, boxes, [1, 2], [], label_intensity=True)
    coded_b = render_page(40, 12, boxes, [2, None], [], label_intensity=True)
    assert not np.array_equal(coded_a, coded_b)


def test_visual_signal_off_keeps_layout(tiny_spec):
    """Test that switching the visual signal off changes pixels, not tokens."""
    off = tiny_spec.model_copy(
        update={"label_intensity": False, "separator_lines": False}
    )
    with_signal = generate_synthetic_corpus(tiny_spec)
    without = generate_synthetic_corpus(off)
    assert not off.visual_signal
    for a, b in zip(with_signal, without):
        assert [t.box for t in a.tokens] == [t.box for t in b.tokens]
        assert a.entities == b.entities
        assert not np.array_equal(a.image, b.image)
        assert set(np.unique(b.image * 255).round()) <= {255.0, float(PLAIN_INK)}


def test_page_too_small(tiny_spec):
    """Test that a page without room for the content is refused."""
    spec = tiny_spec.model_copy(update={"page_width": 100, "page_height": 100})
    with pytest.raises(ConfigError, match="too small"):
        generate_synthetic_corpus(spec)


def test_spec_validation():
    """Test the label set and row range checks."""
    with pytest.raises(ValidationError):
        SyntheticFormSpec(labels=["header", "question", "answer"])
    with pytest.raises(ValidationError):
        SyntheticFormSpec(labels=["a", "a", "b", "c"])
    with pytest.raises(ValidationError):
        SyntheticFormSpec(min_rows=5, max_rows=4)
    with pytest.raises(ValidationError):
        SyntheticFormSpec(resolution=300)


def test_split_corpus(tiny_docs):
    """Test contiguous splits with fractions normalised by their sum."""
    splits = split_corpus(tiny_docs, {"train": 2, "test": 1})
    assert [d.id for d in splits["train"]] == [d.id for d in tiny_docs[:4]]
    assert [d.id for d in splits["test"]] == [d.id for d in tiny_docs[4:]]
    halves = split_corpus(tiny_docs, {"a": 0.5, "b": 0.5})
    assert len(halves["a"]) == len(halves["b"]) == 3
    with pytest.raises(ValueError):
        split_corpus(tiny_docs, {"a": -1.0})
    with pytest.raises(ValueError):
        split_corpus(tiny_docs, {})


def test_write_corpus_reloads(tiny_docs, tmp_path):
    """Test that a written split loads back with its rasters."""
    path = write_corpus(tiny_docs, tmp_path, "test")
    assert path == tmp_path / "test.json"
    loaded = load_dataset(path)
    assert [d.id for d in loaded] == [d.id for d in tiny_docs]
    np.testing.assert_array_equal(loaded[0].image, tiny_docs[0].image)
