"""Masked views of encoded sequences for language-model training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .text import NUM_SPECIALS, MASK_ID


@dataclass
class MaskedView:
    """An encoded sequence with substitutions applied at selected positions.

    ``input_ids`` carries the corrupted sequence, ``positions`` the masked
    slots (never specials), and ``targets`` the original ids there.
    """

    input_ids: np.ndarray
    positions: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.input_ids = np.asarray(self.input_ids, dtype=np.int64)
        self.positions = np.asarray(self.positions, dtype=np.int64)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        if self.positions.shape != self.targets.shape:
            raise ContractError("positions and targets must align")
        if self.positions.size and (self.positions.min() < 0 or self.positions.max() >= len(self.input_ids)):
            raise ContractError("masked position out of range")

    @property
    def num_masked(self) -> int:
        return int(self.positions.size)


def mask_sequence(ids: list[int] | np.ndarray, p: float, rng: np.random.Generator,
                  vocab_size: int) -> MaskedView:
    """BERT-style corruption of one encoded sequence.

    Each non-special position (id >= 5; CLS/SEP/PAD/UNK/MASK are never
    candidates) is selected independently with probability ``p``. Selected
    positions become [MASK] 80% of the time, a random non-special token 10%,
    and stay unchanged 10%; targets always store the original id.
    """
    if not 0.0 <= p < 1.0:
        raise ContractError(f"mask probability must be in [0, 1), got {p}")
    ids = np.asarray(ids, dtype=np.int64)
    out = ids.copy()
    candidates = np.flatnonzero(ids >= NUM_SPECIALS)
    if p == 0.0 or candidates.size == 0:
        return MaskedView(out, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    selected = candidates[rng.random(candidates.size) < p]
    targets = ids[selected].copy()
    for pos in selected:
        r = rng.random()
        if r < 0.8:
            out[pos] = MASK_ID
        elif r < 0.9:
            out[pos] = int(rng.integers(NUM_SPECIALS, vocab_size))
        # else: keep the original token
    return MaskedView(out, selected, targets)


def mask_batch(batch_ids: list[list[int]], p: float, rng: np.random.Generator,
               vocab_size: int) -> list[MaskedView]:
    """Apply :func:`mask_sequence` to every sequence of a batch in order."""
    return [mask_sequence(ids, p, rng, vocab_size) for ids in batch_ids]
