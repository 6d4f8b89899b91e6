"""Word-level vocabulary with four reserved ids."""

import logging
from collections import Counter
from typing import Any, Dict, Iterable, List, Sequence
import numpy as np

logger = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
MASK_ID = 2
GLOBAL_ID = 3
RESERVED = ("[PAD]", "[UNK]", "[MASK]", "[GLOBAL]")
NUM_RESERVED = len(RESERVED)


class Vocabulary:
    """Bijective map between token strings and ids.

    Ids 0-3 are reserved; everything else is ordered by descending corpus
    frequency with ties broken lexicographically.
    """

    def __init__(self, tokens: Sequence[str], lowercase: bool = True) -> None:
        self.lowercase = lowercase
        self.itos: List[str] = list(RESERVED) + list(tokens)
        self.stoi: Dict[str, int] = {s: i for i, s in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("Vocabulary entries must be unique")

    def __len__(self) -> int:
        return len(self.itos)

    def normalize(self, text: str) -> str:
        return text.lower() if self.lowercase else text

    def id_of(self, text: str) -> int:
        return self.stoi.get(self.normalize(text), UNK_ID)

    def encode(self, texts: Iterable[str]) -> np.ndarray:
        return np.array([self.id_of(t) for t in texts], dtype=np.int64)

    def to_dict(self) -> Dict[str, Any]:
        return {"lowercase": self.lowercase, "tokens": self.itos[NUM_RESERVED:]}

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "Vocabulary":
        return cls(payload["tokens"], lowercase=bool(payload.get("lowercase", True)))


def build_vocab(
    corpus: Iterable[str], max_size: int, lowercase: bool = True
) -> Vocabulary:
    """Keep the most frequent strings; ``max_size`` includes the reserved ids."""
    counts = Counter(t.lower() if lowercase else t for t in corpus)
    if not counts:
        raise ValueError("Cannot build a vocabulary from an empty corpus")
    if max_size < NUM_RESERVED:
        raise ValueError(f"max_size must be at least {NUM_RESERVED}, got {max_size}")
    ranked = sorted(
        (token for token in counts if token not in RESERVED),
        key=lambda token: (-counts[token], token),
    )
    vocab = Vocabulary(ranked[: max_size - NUM_RESERVED], lowercase=lowercase)
    logger.info(
        f"Built vocabulary size={len(vocab)} from {len(counts)} distinct strings"
    )
    return vocab
