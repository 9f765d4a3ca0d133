"""Tokenization, vocabulary construction, and id encoding/decoding."""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import ConfigError, ContractError

PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
NUM_SPECIALS = len(SPECIAL_TOKENS)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


@dataclass
class TokenSeq:
    """An ordered list of surface tokens with an optional language tag."""

    tokens: list[str]
    lang: Optional[str] = None

    def __post_init__(self):
        if any(t == "" for t in self.tokens):
            raise ContractError("TokenSeq may not contain empty tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)


def tokenize(text: str, script_mode: str = "whitespace", lang: Optional[str] = None) -> TokenSeq:
    """Split text into tokens.

    ``whitespace`` mode lowercases, splits on whitespace, and detaches
    leading/trailing punctuation as separate tokens. ``char`` mode emits one
    token per non-space character (for scripts written without spaces).
    Empty text yields an empty sequence.
    """
    text = unicodedata.normalize("NFC", text)
    if script_mode == "char":
        return TokenSeq([ch for ch in text if not ch.isspace()], lang=lang)
    if script_mode != "whitespace":
        raise ConfigError(f"unknown script_mode {script_mode!r}")
    tokens: list[str] = []
    for chunk in text.lower().split():
        head: list[str] = []
        tail: list[str] = []
        while chunk and _is_punct(chunk[0]):
            head.append(chunk[0])
            chunk = chunk[1:]
        while chunk and _is_punct(chunk[-1]):
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(head)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(tail))
    return TokenSeq(tokens, lang=lang)


@dataclass
class Vocabulary:
    """Bijective token/id map with five fixed specials at ids 0..4."""

    id_to_token: list[str]
    token_to_id: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if tuple(self.id_to_token[:NUM_SPECIALS]) != SPECIAL_TOKENS:
            raise ConfigError("vocabulary must start with the five special tokens")
        if not self.token_to_id:
            self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ConfigError("vocabulary tokens are not unique")

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.id_to_token):
            raise ContractError(f"id {token_id} out of range for vocabulary of size {len(self)}")
        return self.id_to_token[token_id]


def build_vocab(corpus: Iterable[TokenSeq], max_size: int) -> Vocabulary:
    """Keep the most frequent corpus tokens, specials included in the budget.

    Frequency ties break lexicographically (smaller token wins). Special
    surface forms occurring in corpus text are never counted.
    """
    if max_size < NUM_SPECIALS + 1:
        raise ConfigError(f"max_size must be at least {NUM_SPECIALS + 1}, got {max_size}")
    counts: Counter[str] = Counter()
    for seq in corpus:
        for tok in seq.tokens:
            if tok not in SPECIAL_TOKENS:
                counts[tok] += 1
    budget = max_size - NUM_SPECIALS
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked[:budget]]
    return Vocabulary(list(SPECIAL_TOKENS) + kept)


def encode(seq: TokenSeq, vocab: Vocabulary) -> list[int]:
    """Token ids framed as [CLS] ... [SEP]; unknown tokens map to [UNK]."""
    return [CLS_ID] + [vocab.id_of(t) for t in seq.tokens] + [SEP_ID]


def decode(ids: Iterable[int], vocab: Vocabulary) -> TokenSeq:
    """Inverse of :func:`encode`; specials render by name."""
    return TokenSeq([vocab.token_of(i) for i in ids])


def strip_frame(tokens: list[str]) -> list[str]:
    """Drop [CLS]/[SEP]/[PAD] framing from decoded surface tokens."""
    return [t for t in tokens if t not in ("[CLS]", "[SEP]", "[PAD]")]


def save_vocab_file(vocab: Vocabulary, path) -> None:
    """One non-special token per line; line number == id - 5."""
    with open(path, "w", encoding="utf-8") as fh:
        for tok in vocab.id_to_token[NUM_SPECIALS:]:
            fh.write(tok + "\n")


def load_vocab_file(path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    if any(t == "" for t in tokens):
        raise ConfigError(f"empty token line in vocabulary file {path}")
    return Vocabulary(list(SPECIAL_TOKENS) + tokens)
