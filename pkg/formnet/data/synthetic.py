"""Synthetic key-value form generator.

Pages carry a header band, rows of question/answer pairs and a footer of
noise words. Rasters draw every token as a filled rectangle; with
``label_intensity`` on, the ink level encodes the token's entity label, and
``separator_lines`` draws rules between rows and between the two spans of a
row. Generation is a pure function of the :class:`SyntheticFormSpec`.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from ..errors import ConfigError
from .documents import Box, Document, Entity, Token, save_dataset

logger = logging.getLogger(__name__)

MARGIN = 16
TOKEN_HEIGHT = 12
WORD_GAP = 6
ROW_PITCH = 30
HEADER_BAND = 40
FOOTER_BAND = 24
BACKGROUND = 255
# ink per role (header, question, answer, other) and for unlabelled tokens
ROLE_INK = (0, 50, 100, 150)
OUTSIDE_INK = 200
PLAIN_INK = 80
SEPARATOR_INK = 128

Segment = Tuple[int, int, int, int]


class SyntheticFormSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0, ge=0)
    num_documents: int = Field(default=100, ge=0)
    page_width: int = Field(default=512, gt=0)
    page_height: int = Field(default=640, gt=0)
    labels: List[str] = Field(default=["header", "question", "answer", "other"])
    vocab_size: int = Field(default=200, ge=8)
    min_rows: int = Field(default=3, ge=1)
    max_rows: int = Field(default=8, ge=1)
    max_span_words: int = Field(default=3, ge=1)
    noise_tokens: int = Field(default=4, ge=0)
    label_intensity: bool = True
    separator_lines: bool = True
    text_ambiguity: float = Field(default=0.3, ge=0.0, le=1.0)
    inline_answer_rate: float = Field(default=0.5, ge=0.0, le=1.0)

    @field_validator("labels")
    @classmethod
    def _four_roles(cls, labels: List[str]) -> List[str]:
        if len(labels) != 4 or len(set(labels)) != 4:
            raise ValueError(
                "labels must name 4 distinct roles: header, key, value, other"
            )
        return labels

    @model_validator(mode="after")
    def _row_range(self) -> "SyntheticFormSpec":
        if self.min_rows > self.max_rows:
            raise ValueError(
                f"min_rows {self.min_rows} exceeds max_rows {self.max_rows}"
            )
        return self

    @property
    def visual_signal(self) -> bool:
        return self.label_intensity or self.separator_lines


def word_width(text: str) -> int:
    return 6 * len(text) + 4


def _check_fits(spec: SyntheticFormSpec) -> None:
    longest_word = word_width(f"w{spec.vocab_size - 1}")
    widest_span = spec.max_span_words * (longest_word + WORD_GAP)
    need_h = 2 * MARGIN + HEADER_BAND + spec.max_rows * ROW_PITCH + FOOTER_BAND
    footer_span = spec.noise_tokens * (longest_word + 3 * WORD_GAP)
    need_w = 2 * MARGIN + max(2 * widest_span + 4 * WORD_GAP, footer_span)
    if spec.page_height < need_h or spec.page_width < need_w:
        raise ConfigError(
            f"page {spec.page_width}x{spec.page_height} too small for "
            f"{spec.max_rows} rows of {spec.max_span_words}-word spans "
            f"(needs {need_w}x{need_h})"
        )


class _PageBuilder:
    """Accumulates tokens, entity spans and separator segments for one page."""

    def __init__(self, spec: SyntheticFormSpec, rng: np.random.Generator) -> None:
        self.spec = spec
        self.rng = rng
        self.tokens: List[Token] = []
        self.entities: List[Entity] = []
        self.separators: List[Segment] = []
        pool = spec.vocab_size - 1
        self.role_pools = np.array_split(np.arange(1, pool + 1), 4)

    def word(self, role: int) -> str:
        if self.rng.random() < self.spec.text_ambiguity:
            return f"w{int(self.rng.integers(1, self.spec.vocab_size))}"
        return f"w{int(self.rng.choice(self.role_pools[role]))}"

    def span(self, x: int, y: int, role: Optional[int], n_words: int) -> int:
        """Place ``n_words`` words from ``x``; returns the x after the span."""
        start = len(self.tokens)
        for _ in range(n_words):
            text = self.word(role if role is not None else 3)
            box: Box = (x, y, x + word_width(text), y + TOKEN_HEIGHT)
            self.tokens.append(Token(text, box, len(self.tokens)))
            x = box[2] + WORD_GAP
        if role is not None:
            end = len(self.tokens) - 1
            self.entities.append(Entity(self.spec.labels[role], start, end))
        return x - WORD_GAP

    def words(self) -> int:
        return int(self.rng.integers(1, self.spec.max_span_words + 1))


def _layout(spec: SyntheticFormSpec, rng: np.random.Generator) -> _PageBuilder:
    page = _PageBuilder(spec, rng)
    width = spec.page_width
    column = width // 2

    header_words = page.words()
    page.span(MARGIN, MARGIN, 0, header_words)
    top = MARGIN + HEADER_BAND
    if spec.separator_lines:
        page.separators.append((MARGIN, top - 8, width - MARGIN, top - 8))

    n_rows = int(rng.integers(spec.min_rows, spec.max_rows + 1))
    for r in range(n_rows):
        y = top + r * ROW_PITCH
        end = page.span(MARGIN, y, 1, page.words())
        if rng.random() < spec.inline_answer_rate:
            answer_x = end + int(rng.integers(2, 5)) * WORD_GAP
        else:
            answer_x = column
        if spec.separator_lines:
            tick = (end + answer_x) // 2
            page.separators.append((tick, y - 2, tick, y + TOKEN_HEIGHT + 2))
        page.span(answer_x, y, 2, page.words())
        if spec.separator_lines:
            rule_y = y + TOKEN_HEIGHT + (ROW_PITCH - TOKEN_HEIGHT) // 2
            page.separators.append((MARGIN, rule_y, width - MARGIN, rule_y))

    footer_y = top + n_rows * ROW_PITCH + 4
    x = MARGIN
    for _ in range(int(rng.integers(0, spec.noise_tokens + 1))):
        role: Optional[int] = 3 if rng.random() < 0.5 else None
        x = page.span(x, footer_y, role, 1) + 3 * WORD_GAP
    return page


def render_page(
    width: int,
    height: int,
    boxes: Sequence[Box],
    token_roles: Sequence[Optional[int]],
    separators: Sequence[Segment],
    label_intensity: bool,
) -> np.ndarray:
    """Rasterise token rectangles and separator rules into a [0, 1] page."""
    image = Image.new("L", (width, height), color=BACKGROUND)
    draw = ImageDraw.Draw(image)
    for segment in separators:
        draw.line(list(segment), fill=SEPARATOR_INK, width=1)
    for box, role in zip(boxes, token_roles):
        if not label_intensity:
            ink = PLAIN_INK
        else:
            ink = OUTSIDE_INK if role is None else ROLE_INK[role]
        x0, y0, x1, y1 = box
        draw.rectangle([x0, y0, x1 - 1, y1 - 1], fill=ink)
    return np.asarray(image, dtype=np.float32) / 255.0


def token_roles(doc: Document, labels: Sequence[str]) -> List[Optional[int]]:
    roles: List[Optional[int]] = [None] * len(doc.tokens)
    for entity in doc.entities:
        for i in range(entity.start, entity.end + 1):
            roles[i] = labels.index(entity.label)
    return roles


def generate_document(spec: SyntheticFormSpec, index: int) -> Document:
    rng = np.random.default_rng([spec.seed, index])
    page = _layout(spec, rng)
    doc_id = f"synth-{spec.seed}-{index:05d}"
    doc = Document(
        id=doc_id,
        page_width=spec.page_width,
        page_height=spec.page_height,
        tokens=page.tokens,
        entities=page.entities,
        image_ref=f"images/{doc_id}.pgm",
    )
    doc.image = render_page(
        spec.page_width,
        spec.page_height,
        [t.box for t in doc.tokens],
        token_roles(doc, spec.labels),
        page.separators,
        spec.label_intensity,
    )
    return doc


def generate_synthetic_corpus(spec: SyntheticFormSpec) -> List[Document]:
    """All documents of a spec, in index order."""
    _check_fits(spec)
    documents = [generate_document(spec, i) for i in range(spec.num_documents)]
    logger.info(
        f"Generated {len(documents)} synthetic forms seed={spec.seed} "
        f"visual_signal={spec.visual_signal}"
    )
    return documents


def split_corpus(
    documents: Sequence[Document], fractions: Dict[str, float]
) -> Dict[str, List[Document]]:
    """Contiguous splits in input order; the last split takes the remainder."""
    if not fractions or any(f < 0 for f in fractions.values()):
        raise ValueError(f"Invalid split fractions {fractions}")
    total = sum(fractions.values())
    splits: Dict[str, List[Document]] = {}
    start = 0
    names = list(fractions)
    for i, name in enumerate(names):
        if i == len(names) - 1:
            end = len(documents)
        else:
            end = start + int(round(len(documents) * fractions[name] / total))
        splits[name] = list(documents[start:end])
        start = end
    return splits


def write_corpus(
    documents: Sequence[Document], out_dir: Union[str, Path], split: str
) -> Path:
    """Write ``<split>.json`` plus the rasters under ``images/``."""
    path = Path(out_dir) / f"{split}.json"
    save_dataset(documents, path)
    return path
