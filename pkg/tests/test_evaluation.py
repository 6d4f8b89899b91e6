"""Tests for the evaluation module."""

import numpy as np
import pytest
from formnet.data.documents import Entity
from formnet.evaluation import (
    OUTSIDE,
    EntityPrediction,
    decode_bioes,
    decode_tags,
    encode_bioes,
    entity_prf,
    evaluate,
    split_tag,
    tag_id,
    tag_names,
    token_accuracy,
)
from formnet.model import FormNetModel

LABELS = ["question", "answer"]
B_Q, I_Q, E_Q, S_Q = (tag_id(0, part) for part in "BIES")
B_A, I_A, E_A, S_A = (tag_id(1, part) for part in "BIES")


def test_tag_layout():
    """Test that ids follow Outside then B/I/E/S per label."""
    assert tag_names(LABELS) == [
        "O",
        "B-question",
        "I-question",
        "E-question",
        "S-question",
        "B-answer",
        "I-answer",
        "E-answer",
        "S-answer",
    ]
    assert (B_Q, S_Q, B_A, S_A) == (1, 4, 5, 8)
    assert split_tag(E_A) == (1, "E")


def test_decode_well_formed_span():
    """Test that B I E decodes to one entity."""
    assert decode_tags([B_Q, I_Q, E_Q, OUTSIDE], LABELS) == [
        EntityPrediction("question", 0, 2)
    ]


def test_decode_drops_span_without_begin():
    """Test that I E with no B decodes to nothing."""
    assert decode_tags([I_Q, E_Q], LABELS) == []


def test_decode_singletons():
    """Test that S O S decodes to two entities."""
    assert decode_tags([S_A, OUTSIDE, S_A], LABELS) == [
        EntityPrediction("answer", 0, 0),
        EntityPrediction("answer", 2, 2),
    ]


def test_decode_resumes_after_broken_fragment():
    """Test that a fragment broken by another tag is dropped but the breaker counts."""
    tags = [B_Q, I_Q, S_A, B_A, E_A, B_Q]
    assert decode_tags(tags, LABELS) == [
        EntityPrediction("answer", 2, 2),
        EntityPrediction("answer", 3, 4),
    ]


def test_decode_rejects_label_switch():
    """Test that B of one label closed by E of another is dropped."""
    assert decode_tags([B_Q, E_A], LABELS) == []


def test_decode_bioes_takes_argmax():
    """Test decoding straight from logits."""
    logits = np.zeros((3, len(tag_names(LABELS))))
    logits[0, B_A] = logits[1, E_A] = logits[2, OUTSIDE] = 1.0
    assert decode_bioes(logits, LABELS) == [EntityPrediction("answer", 0, 1)]


def test_encode_bioes():
    """Test gold spans to tags."""
    entities = [Entity("question", 0, 2), Entity("answer", 4, 4)]
    tags = encode_bioes(entities, 6, LABELS)
    assert tags.tolist() == [B_Q, I_Q, E_Q, OUTSIDE, S_A, OUTSIDE]


@pytest.mark.parametrize("seed", range(10))
def test_encode_then_decode_recovers_spans(seed):
    """Test random non-overlapping spans survive tagging and decoding."""
    rng = np.random.default_rng(seed)
    n = 30
    entities = []
    position = int(rng.integers(0, 3))
    while position < n:
        length = int(rng.integers(1, 5))
        end = min(position + length - 1, n - 1)
        entities.append(Entity(LABELS[int(rng.integers(0, 2))], position, end))
        position = end + 1 + int(rng.integers(0, 3))
    decoded = decode_tags(encode_bioes(entities, n, LABELS), LABELS)
    assert decoded == [EntityPrediction(e.label, e.start, e.end) for e in entities]


@pytest.mark.parametrize("seed", range(10))
def test_decoded_entities_are_well_formed(seed):
    """Test that every entity decoded from random tags re-encodes to its tags."""
    rng = np.random.default_rng(seed)
    tags = rng.integers(0, len(tag_names(LABELS)), size=40)
    for entity in decode_tags(tags, LABELS):
        span = tags[entity.start : entity.end + 1].tolist()
        gold = Entity(entity.label, 0, entity.end - entity.start)
        assert span == encode_bioes([gold], len(span), LABELS).tolist()


def test_entity_prf_half_right():
    """Test one correct and one misplaced entity."""
    gold = [[EntityPrediction("q", 0, 1), EntityPrediction("a", 2, 2)]]
    pred = [[EntityPrediction("q", 0, 1), EntityPrediction("a", 3, 3)]]
    report = entity_prf(pred, gold)
    assert (report.precision, report.recall, report.f1) == (0.5, 0.5, 0.5)
    assert report.per_label["q"].f1 == 1.0
    assert report.per_label["a"].correct == 0


def test_entity_prf_perfect_and_empty():
    """Test perfect predictions and documents without entities."""
    gold = [[EntityPrediction("q", 0, 1)], [EntityPrediction("a", 4, 6)]]
    assert entity_prf(gold, gold).f1 == 1.0
    empty = entity_prf([[], []], [[], []])
    assert (empty.precision, empty.recall, empty.f1) == (0.0, 0.0, 0.0)
    assert entity_prf([[], []], [[], []], "macro").f1 == 0.0


def test_entity_prf_counts_duplicates_once():
    """Test that a repeated prediction is scored as one."""
    gold = [[EntityPrediction("q", 0, 1)]]
    pred = [[EntityPrediction("q", 0, 1), EntityPrediction("q", 0, 1)]]
    assert entity_prf(pred, gold).precision == 1.0


def test_entity_prf_macro_averages_labels():
    """Test that macro weights each label equally."""
    questions = [EntityPrediction("q", i, i) for i in range(3)]
    gold = [questions + [EntityPrediction("a", 5, 5)]]
    pred = [questions]
    micro = entity_prf(pred, gold, "micro")
    macro = entity_prf(pred, gold, "macro")
    assert micro.recall == pytest.approx(0.75)
    assert macro.recall == pytest.approx(0.5)
    assert macro.f1 == pytest.approx(0.5)
    assert macro.to_dict()["per_label"]["a"]["gold"] == 1


def test_entity_prf_errors():
    """Test mismatched document counts and unknown modes."""
    with pytest.raises(ValueError):
        entity_prf([[]], [[], []])
    with pytest.raises(ValueError):
        entity_prf([[]], [[]], "weighted")


def test_evaluate_untrained_model(tiny_model_config, tiny_inputs):
    """Test that scores of an untrained model stay within bounds."""
    model = FormNetModel(tiny_model_config)
    report = evaluate(model, tiny_inputs[:2], "macro")
    assert 0.0 <= report.f1 <= 1.0
    assert report.mode == "macro"
    assert 0.0 <= token_accuracy(model, tiny_inputs[:2]) <= 1.0


def test_evaluate_empty_split(tiny_model_config):
    """Test that an empty split is refused."""
    with pytest.raises(ValueError):
        evaluate(FormNetModel(tiny_model_config), [])


def confusion_counts(predicted, gold):
    """True positives, false positives and false negatives by nested loops."""
    tp = fp = fn = 0
    for pred_doc, gold_doc in zip(predicted, gold):
        for p in pred_doc:
            if any(p == g for g in gold_doc):
                tp += 1
            else:
                fp += 1
        for g in gold_doc:
            if not any(g == p for p in pred_doc):
                fn += 1
    return tp, fp, fn


def test_micro_f1_matches_confusion_counts():
    """Test micro scores against counted spans on 100 random tag pairs."""
    rng = np.random.default_rng(11)
    num_tags = len(tag_names(LABELS))
    for _ in range(100):
        predicted, gold = [], []
        for _ in range(int(rng.integers(1, 4))):
            gold_tags = rng.integers(0, num_tags, size=int(rng.integers(1, 16)))
            pred_tags = gold_tags.copy()
            flips = rng.random(gold_tags.size) < 0.3
            pred_tags[flips] = rng.integers(0, num_tags, size=int(flips.sum()))
            gold.append(decode_tags(gold_tags.tolist(), LABELS))
            predicted.append(decode_tags(pred_tags.tolist(), LABELS))
        tp, fp, fn = confusion_counts(predicted, gold)
        report = entity_prf(predicted, gold)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        assert report.precision == pytest.approx(precision, abs=1e-12)
        assert report.recall == pytest.approx(recall, abs=1e-12)
        assert report.f1 == pytest.approx(f1, abs=1e-12)
