"""Document model and the JSON dataset format.

A dataset file holds ``{"documents": [...]}``; each document names a sibling
PGM/PPM image by relative path. Token order in the file is the OCR reading
order and is preserved exactly.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)
from ..errors import DatasetError, ImageFormatError
from .images import load_image, save_image

logger = logging.getLogger(__name__)

Box = Tuple[int, int, int, int]


@dataclass
class Token:
    text: str
    box: Box
    index: int

    @property
    def center(self) -> Tuple[float, float]:
        x0, y0, x1, y1 = self.box
        return (x0 + x1) / 2.0, (y0 + y1) / 2.0


@dataclass(frozen=True)
class Entity:
    """A labelled span of tokens; ``end`` is inclusive."""

    label: str
    start: int
    end: int


@dataclass
class Document:
    id: str
    page_width: int
    page_height: int
    tokens: List[Token]
    entities: List[Entity] = field(default_factory=list)
    image: Optional[np.ndarray] = None
    image_ref: str = ""

    @property
    def texts(self) -> List[str]:
        return [t.text for t in self.tokens]

    @property
    def boxes(self) -> np.ndarray:
        return np.array([t.box for t in self.tokens], dtype=np.float64).reshape(-1, 4)


class TokenRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    text: str
    box: Box

    @field_validator("box")
    @classmethod
    def _ordered(cls, box: Box) -> Box:
        x0, y0, x1, y1 = box
        if x0 > x1 or y0 > y1:
            raise ValueError(f"box corners out of order: {list(box)}")
        if min(box) < 0:
            raise ValueError(f"negative box coordinate: {list(box)}")
        return box


class EntityRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    label: str = Field(min_length=1)
    start: int = Field(ge=0)
    end: int = Field(ge=0)

    @model_validator(mode="after")
    def _span_order(self) -> "EntityRecord":
        if self.start > self.end:
            raise ValueError(f"span start {self.start} is after end {self.end}")
        return self


class DocumentRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str = Field(min_length=1)
    page_width: int = Field(gt=0)
    page_height: int = Field(gt=0)
    image: str = Field(min_length=1)
    tokens: List[TokenRecord]
    entities: List[EntityRecord] = Field(default_factory=list)

    @model_validator(mode="after")
    def _within_page(self) -> "DocumentRecord":
        for token in self.tokens:
            x0, y0, x1, y1 = token.box
            if x1 > self.page_width or y1 > self.page_height:
                raise ValueError(
                    f"token box {list(token.box)} exceeds page "
                    f"{self.page_width}x{self.page_height}"
                )
        spans = sorted(self.entities, key=lambda e: (e.start, e.end))
        for entity in spans:
            if entity.end >= len(self.tokens):
                raise ValueError(
                    f"entity span ({entity.start}, {entity.end}) outside "
                    f"{len(self.tokens)} tokens"
                )
        for left, right in zip(spans, spans[1:]):
            if right.start <= left.end:
                raise ValueError(
                    f"overlapping entity spans ({left.start}, {left.end}) and "
                    f"({right.start}, {right.end})"
                )
        return self


def _error_path(error: Dict[str, Any]) -> Tuple[Any, ...]:
    return tuple(error.get("loc", ()))


def parse_document(raw: Any, base_dir: Path, position: int) -> Document:
    """Validate one raw JSON document and load its raster."""
    doc_id = raw.get("id", f"#{position}") if isinstance(raw, dict) else f"#{position}"
    try:
        record = DocumentRecord.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        raise DatasetError(
            first["msg"], doc_id=str(doc_id), path=_error_path(first)
        ) from e

    image_path = base_dir / record.image
    if not image_path.exists():
        raise DatasetError(f"missing image {image_path}", record.id, ("image",))
    try:
        raster = load_image(image_path)
    except ImageFormatError as e:
        raise DatasetError(str(e), record.id, ("image",)) from e
    if raster.shape != (record.page_height, record.page_width):
        raise DatasetError(
            f"image is {raster.shape[1]}x{raster.shape[0]}, page is "
            f"{record.page_width}x{record.page_height}",
            record.id,
            ("image",),
        )

    tokens = [Token(t.text, tuple(t.box), i) for i, t in enumerate(record.tokens)]
    entities = [Entity(e.label, e.start, e.end) for e in record.entities]
    return Document(
        id=record.id,
        page_width=record.page_width,
        page_height=record.page_height,
        tokens=tokens,
        entities=entities,
        image=raster,
        image_ref=record.image,
    )


def load_dataset(path: Union[str, Path]) -> List[Document]:
    """Read and validate a dataset file; images resolve relative to it."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DatasetError(f"cannot read {path}: {e}") from e
    if not isinstance(payload, dict) or not isinstance(payload.get("documents"), list):
        raise DatasetError("top-level object must hold a 'documents' list")
    extra = set(payload) - {"documents"}
    if extra:
        raise DatasetError(f"unknown top-level keys {sorted(extra)}")

    documents = [
        parse_document(raw, path.parent, i)
        for i, raw in enumerate(payload["documents"])
    ]
    seen = set()
    for doc in documents:
        if doc.id in seen:
            raise DatasetError("duplicate document id", doc.id, ("id",))
        seen.add(doc.id)
    logger.info(f"Loaded {len(documents)} documents from {path}")
    return documents


def document_to_dict(doc: Document) -> Dict[str, Any]:
    return {
        "id": doc.id,
        "page_width": doc.page_width,
        "page_height": doc.page_height,
        "image": doc.image_ref,
        "tokens": [{"text": t.text, "box": list(t.box)} for t in doc.tokens],
        "entities": [
            {"label": e.label, "start": e.start, "end": e.end} for e in doc.entities
        ],
    }


def dumps_dataset(documents: Sequence[Document]) -> str:
    payload = {"documents": [document_to_dict(doc) for doc in documents]}
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def save_dataset(
    documents: Sequence[Document], path: Union[str, Path], write_images: bool = True
) -> None:
    """Write the dataset JSON and, optionally, every document raster."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if write_images:
        for doc in documents:
            if doc.image is None:
                raise DatasetError("no raster to write", doc.id, ("image",))
            save_image(doc.image, path.parent / doc.image_ref)
    path.write_text(dumps_dataset(documents), encoding="utf-8")
    logger.info(f"Wrote {len(documents)} documents to {path}")
