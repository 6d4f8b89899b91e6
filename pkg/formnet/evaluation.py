"""BIOES tagging and entity-level precision / recall / F1."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Sequence, Tuple
import numpy as np
from .data.documents import Entity
from .model import BIOES, DocumentInput, FormNetModel

logger = logging.getLogger(__name__)

OUTSIDE = 0
Mode = Literal["micro", "macro"]


@dataclass(frozen=True)
class EntityPrediction:
    label: str
    start: int
    end: int


def tag_id(label_index: int, part: str) -> int:
    return 1 + len(BIOES) * label_index + BIOES.index(part)


def tag_names(labels: Sequence[str]) -> List[str]:
    return ["O"] + [f"{part}-{label}" for label in labels for part in BIOES]


def split_tag(tag: int) -> Tuple[int, str]:
    """``(label_index, part)`` of a non-Outside tag id."""
    offset = tag - 1
    return offset // len(BIOES), BIOES[offset % len(BIOES)]


def encode_bioes(
    entities: Sequence[Entity], n_tokens: int, labels: Sequence[str]
) -> np.ndarray:
    """Gold spans to per-token tag ids."""
    tags = np.full(n_tokens, OUTSIDE, dtype=np.int64)
    for entity in entities:
        li = labels.index(entity.label)
        if entity.start == entity.end:
            tags[entity.start] = tag_id(li, "S")
            continue
        tags[entity.start] = tag_id(li, "B")
        tags[entity.start + 1 : entity.end] = tag_id(li, "I")
        tags[entity.end] = tag_id(li, "E")
    return tags


def decode_tags(tags: Sequence[int], labels: Sequence[str]) -> List[EntityPrediction]:
    """Well-formed ``B I* E`` runs of one label and ``S`` tokens become
    entities; any broken fragment is dropped and scanning resumes at the
    token that broke it."""
    entities: List[EntityPrediction] = []
    n = len(tags)
    i = 0
    while i < n:
        tag = int(tags[i])
        if tag == OUTSIDE:
            i += 1
            continue
        li, part = split_tag(tag)
        if part == "S":
            entities.append(EntityPrediction(labels[li], i, i))
            i += 1
            continue
        if part != "B":
            i += 1
            continue
        j = i + 1
        while j < n and int(tags[j]) == tag_id(li, "I"):
            j += 1
        if j < n and int(tags[j]) == tag_id(li, "E"):
            entities.append(EntityPrediction(labels[li], i, j))
            i = j + 1
        else:
            i = j
    return entities


def decode_bioes(logits: np.ndarray, labels: Sequence[str]) -> List[EntityPrediction]:
    return decode_tags(np.argmax(np.asarray(logits), axis=-1), labels)


def compute(found: int, gold: int, correct: int) -> Tuple[float, float, float]:
    """(precision, recall, f1) with every 0/0 taken as 0."""
    precision = 0.0 if found == 0 else correct / found
    recall = 0.0 if gold == 0 else correct / gold
    if precision + recall == 0:
        return precision, recall, 0.0
    f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1


@dataclass
class LabelScore:
    precision: float
    recall: float
    f1: float
    found: int
    gold: int
    correct: int


@dataclass
class MetricsReport:
    mode: str
    precision: float
    recall: float
    f1: float
    per_label: Dict[str, LabelScore] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "mode": self.mode,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_label": {name: vars(score) for name, score in self.per_label.items()},
        }


def entity_prf(
    predicted: Sequence[Sequence[EntityPrediction]],
    gold: Sequence[Sequence[EntityPrediction]],
    mode: Mode = "micro",
) -> MetricsReport:
    """Exact-match entity scores over a list of documents.

    ``micro`` pools counts over labels and documents; ``macro`` averages the
    per-label scores over every label seen in gold or predictions.
    """
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predicted documents vs {len(gold)} gold")
    if mode not in ("micro", "macro"):
        raise ValueError(f"Unknown aggregation mode {mode!r}")
    found: Dict[str, int] = {}
    origin: Dict[str, int] = {}
    right: Dict[str, int] = {}
    for pred_doc, gold_doc in zip(predicted, gold):
        gold_set = {(e.label, e.start, e.end) for e in gold_doc}
        pred_set = {(e.label, e.start, e.end) for e in pred_doc}
        for label, _, _ in pred_set:
            found[label] = found.get(label, 0) + 1
        for label, _, _ in gold_set:
            origin[label] = origin.get(label, 0) + 1
        for label, _, _ in pred_set & gold_set:
            right[label] = right.get(label, 0) + 1

    per_label: Dict[str, LabelScore] = {}
    for label in sorted(set(found) | set(origin)):
        counts = (found.get(label, 0), origin.get(label, 0), right.get(label, 0))
        per_label[label] = LabelScore(*compute(*counts), *counts)

    if mode == "micro":
        precision, recall, f1 = compute(
            sum(found.values()), sum(origin.values()), sum(right.values())
        )
    elif per_label:
        scores = list(per_label.values())
        precision = float(np.mean([s.precision for s in scores]))
        recall = float(np.mean([s.recall for s in scores]))
        f1 = float(np.mean([s.f1 for s in scores]))
    else:
        precision = recall = f1 = 0.0
    return MetricsReport(mode, precision, recall, f1, per_label)


def as_predictions(entities: Sequence[Entity]) -> List[EntityPrediction]:
    return [EntityPrediction(e.label, e.start, e.end) for e in entities]


def predict(model: FormNetModel, inp: DocumentInput) -> List[EntityPrediction]:
    logits = model.forward_tags(inp)
    return decode_bioes(logits.data, model.config.labels)


def evaluate(
    model: FormNetModel, inputs: Sequence[DocumentInput], mode: Mode = "micro"
) -> MetricsReport:
    """Tag, decode and score a whole split."""
    if not inputs:
        raise ValueError("Cannot evaluate an empty dataset")
    predicted = [predict(model, inp) for inp in inputs]
    gold = [as_predictions(inp.entities) for inp in inputs]
    report = entity_prf(predicted, gold, mode)
    logger.info(
        f"Evaluated {len(inputs)} documents mode={mode} "
        f"p={report.precision:.4f} r={report.recall:.4f} f1={report.f1:.4f}"
    )
    return report


def token_accuracy(model: FormNetModel, inputs: Sequence[DocumentInput]) -> float:
    correct = 0
    total = 0
    for inp in inputs:
        tags = encode_bioes(inp.entities, inp.num_tokens, model.config.labels)
        guess = np.argmax(model.forward_tags(inp).data, axis=-1)
        correct += int((guess == tags).sum())
        total += tags.size
    return correct / total if total else 0.0
