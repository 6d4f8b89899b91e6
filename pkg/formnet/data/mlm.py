"""Masked-language-model sampling with the 80/10/10 replacement rule."""

import zlib
from dataclasses import dataclass
from enum import IntEnum
import numpy as np
from .vocab import GLOBAL_ID, MASK_ID, NUM_RESERVED, PAD_ID

MLM_RATE = 0.15


class Replacement(IntEnum):
    MASK = 0
    RANDOM = 1
    KEEP = 2


@dataclass
class MlmPlan:
    positions: np.ndarray
    replacements: np.ndarray
    original_ids: np.ndarray
    replacement_ids: np.ndarray

    def __len__(self) -> int:
        return int(self.positions.size)

    @classmethod
    def empty(cls) -> "MlmPlan":
        none = np.zeros(0, dtype=np.int64)
        return cls(none, none.copy(), none.copy(), none.copy())


def sample_mlm(
    token_ids: np.ndarray,
    rate: float,
    seed: int,
    vocab_size: int,
    key: str = "",
) -> MlmPlan:
    """Choose prediction positions for one document.

    Each eligible token is selected with probability ``rate``. Selected
    tokens become ``[MASK]`` 80% of the time, a random non-reserved id 10%
    and stay unchanged 10%. The draw depends only on ``(token_ids, rate,
    seed, key)``; callers pass the document id as ``key``.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"MLM rate must lie in [0, 1], got {rate}")
    token_ids = np.asarray(token_ids, dtype=np.int64)
    rng = np.random.default_rng([seed, zlib.crc32(key.encode("utf-8"))])
    eligible = (token_ids != PAD_ID) & (token_ids != GLOBAL_ID)
    draws = rng.random(token_ids.size)
    positions = np.flatnonzero(eligible & (draws < rate))
    kind_draws = rng.random(positions.size)
    replacements = np.where(
        kind_draws < 0.8,
        Replacement.MASK,
        np.where(kind_draws < 0.9, Replacement.RANDOM, Replacement.KEEP),
    ).astype(np.int64)
    low = min(NUM_RESERVED, vocab_size - 1)
    random_ids = rng.integers(low, max(vocab_size, low + 1), size=positions.size)
    original = token_ids[positions]
    replacement_ids = np.where(
        replacements == Replacement.MASK,
        MASK_ID,
        np.where(replacements == Replacement.RANDOM, random_ids, original),
    ).astype(np.int64)
    return MlmPlan(positions, replacements, original, replacement_ids)


def apply_mlm(plan: MlmPlan, token_ids: np.ndarray) -> np.ndarray:
    """Token ids as the model sees them under ``plan``."""
    corrupted = np.array(token_ids, dtype=np.int64, copy=True)
    corrupted[plan.positions] = plan.replacement_ids
    return corrupted
