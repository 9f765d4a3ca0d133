"""Code-switched corpus construction from bilingual dictionaries.

A switch policy replaces each in-dictionary token independently with
probability ``rate``; positions outside the replaced set are copied
verbatim, so sentence length is always preserved. Corpus construction
derives each pair's randomness from (seed, pair index), which makes the
output order-independent and bit-reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, ContractError, ParseError
from .text import TokenSeq

logger = logging.getLogger(__name__)


@dataclass
class BilingualDictionary:
    """Lowercased source token -> non-empty list of target tokens."""

    lang_pair: str
    entries: dict[str, list[str]]

    def __post_init__(self):
        for src, tgts in self.entries.items():
            if not tgts:
                raise ConfigError(f"dictionary entry {src!r} has no targets")
            if src != src.lower():
                raise ConfigError(f"dictionary key {src!r} is not lowercase")

    def __contains__(self, token: str) -> bool:
        return token.lower() in self.entries

    def targets(self, token: str) -> list[str]:
        return self.entries[token.lower()]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class SwitchPolicy:
    """Replacement-rate policy for code-switching.

    ``rate`` is the per-token replacement probability. Pairs whose language
    tag is in ``skip_languages`` pass through untouched. ``target_choice``
    picks among multiple dictionary targets ("first" or "uniform");
    ``per_token_language`` samples the target dictionary per token instead
    of once per pair; ``same_language_per_pair`` applies one sampled
    language to both sides of a pair.
    """

    rate: float = 0.10
    seed: int = 0
    target_choice: str = "first"
    skip_languages: frozenset[str] = frozenset({"en"})
    per_token_language: bool = False
    same_language_per_pair: bool = True

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError(f"switch rate must be in [0, 1], got {self.rate}")
        if self.target_choice not in ("first", "uniform"):
            raise ConfigError(f"target_choice must be 'first' or 'uniform', got {self.target_choice!r}")
        object.__setattr__(self, "skip_languages", frozenset(self.skip_languages))


@dataclass
class CsPair:
    """A query-label pair with its code-switched form and replaced index sets."""

    query: TokenSeq
    label: TokenSeq
    switched_query: TokenSeq
    switched_label: TokenSeq
    replaced_query: tuple[int, ...]
    replaced_label: tuple[int, ...]

    def __post_init__(self):
        if len(self.switched_query) != len(self.query) or len(self.switched_label) != len(self.label):
            raise ContractError("code-switching must preserve sentence length")
        for orig, switched, replaced in (
            (self.query, self.switched_query, self.replaced_query),
            (self.label, self.switched_label, self.replaced_label),
        ):
            rep = set(replaced)
            for i, (a, b) in enumerate(zip(orig.tokens, switched.tokens)):
                if i not in rep and a != b:
                    raise ContractError(f"position {i} changed outside the replaced set")

    @property
    def lang(self) -> Optional[str]:
        return self.query.lang


def load_dictionary(path, lang_pair: Optional[str] = None) -> BilingualDictionary:
    """Parse a source<TAB>target lexicon file.

    Repeated sources merge their targets in file order (de-duplicated).
    Multi-word targets collapse to their first token so that replacement
    keeps positional alignment; collapses are reported once per file.
    """
    entries: dict[str, list[str]] = {}
    collapsed = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.count("\t") != 1:
                raise ParseError(f"{path}: line {lineno}: expected exactly one tab")
            src, tgt = line.split("\t")
            src, tgt = src.strip().lower(), tgt.strip()
            if not src or not tgt:
                raise ParseError(f"{path}: line {lineno}: empty source or target")
            parts = tgt.split()
            if len(parts) > 1:
                collapsed += 1
                tgt = parts[0]
            bucket = entries.setdefault(src, [])
            if tgt not in bucket:
                bucket.append(tgt)
    if collapsed:
        logger.warning("%s: collapsed %d multi-word targets to their first token", path, collapsed)
    return BilingualDictionary(lang_pair or str(path), entries)


def _pick_target(targets: list[str], policy: SwitchPolicy, rng: np.random.Generator) -> str:
    if policy.target_choice == "uniform" and len(targets) > 1:
        return targets[int(rng.integers(len(targets)))]
    return targets[0]


def code_switch(seq: TokenSeq, dictionary: BilingualDictionary, policy: SwitchPolicy,
                rng: np.random.Generator) -> tuple[TokenSeq, tuple[int, ...]]:
    """Replace in-dictionary tokens independently with probability ``rate``.

    Returns the switched sequence and the exact set of replaced positions.
    Out-of-dictionary tokens are never replaced.
    """
    tokens = list(seq.tokens)
    replaced: list[int] = []
    for i, tok in enumerate(tokens):
        if tok not in dictionary:
            continue
        if rng.random() < policy.rate:
            tokens[i] = _pick_target(dictionary.targets(tok), policy, rng)
            replaced.append(i)
    return TokenSeq(tokens, lang=seq.lang), tuple(replaced)


def _pair_rng(seed: int, pair_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(pair_index,)))


def build_cs_knowledge(pairs: Sequence[tuple[TokenSeq, TokenSeq]],
                       dictionaries: BilingualDictionary | Sequence[BilingualDictionary],
                       policy: SwitchPolicy) -> list[CsPair]:
    """Code-switch both sides of every query-label pair.

    With several dictionaries, one target language is sampled uniformly per
    pair (both sides use it when ``same_language_per_pair``); the per-token
    mode re-samples the dictionary at each position. Pairs tagged with a
    language in ``policy.skip_languages`` pass through unchanged.
    """
    if isinstance(dictionaries, BilingualDictionary):
        dictionaries = [dictionaries]
    dictionaries = list(dictionaries)
    if not dictionaries:
        raise ConfigError("at least one dictionary is required")
    out: list[CsPair] = []
    for idx, (q, l) in enumerate(pairs):
        if q.lang is not None and q.lang in policy.skip_languages:
            out.append(CsPair(q, l, TokenSeq(list(q.tokens), lang=q.lang),
                              TokenSeq(list(l.tokens), lang=l.lang), (), ()))
            continue
        rng = _pair_rng(policy.seed, idx)
        if policy.per_token_language:
            sq, s_q = _switch_per_token(q, dictionaries, policy, rng)
            sl, s_l = _switch_per_token(l, dictionaries, policy, rng)
        else:
            d_q = dictionaries[int(rng.integers(len(dictionaries)))]
            d_l = d_q if policy.same_language_per_pair else dictionaries[int(rng.integers(len(dictionaries)))]
            sq, s_q = code_switch(q, d_q, policy, rng)
            sl, s_l = code_switch(l, d_l, policy, rng)
        out.append(CsPair(q, l, sq, sl, s_q, s_l))
    return out


def _switch_per_token(seq: TokenSeq, dictionaries: list[BilingualDictionary],
                      policy: SwitchPolicy, rng: np.random.Generator) -> tuple[TokenSeq, tuple[int, ...]]:
    tokens = list(seq.tokens)
    replaced: list[int] = []
    for i, tok in enumerate(tokens):
        candidates = [d for d in dictionaries if tok in d]
        if not candidates:
            continue
        if rng.random() < policy.rate:
            d = candidates[int(rng.integers(len(candidates)))]
            tokens[i] = _pick_target(d.targets(tok), policy, rng)
            replaced.append(i)
    return TokenSeq(tokens, lang=seq.lang), tuple(replaced)


# ---------------------------------------------------------------------------
# corpus statistics (mixing report)
# ---------------------------------------------------------------------------


@dataclass
class CorpusStats:
    mixed: float
    english: float
    native: float

    def as_dict(self) -> dict[str, float]:
        return {"mixed": self.mixed, "english": self.english, "native": self.native}


def classify_sentence(tokens: Iterable[str], lexicons: Mapping[str, set[str]],
                      english_tag: str = "en") -> str:
    """Classify a sentence as mixed / english / native by lexicon membership.

    Tokens found in exactly one lexicon cast an unambiguous vote for that
    language; unambiguous votes for two or more languages mean "mixed".
    Sentences with only ambiguous tokens fall back to majority voting over
    memberships, ties going to "mixed". Sentences with no lexicon hits at
    all count as native.
    """
    votes: dict[str, int] = {}
    memberships: dict[str, int] = {}
    for tok in tokens:
        tok = tok.lower()
        langs = [lang for lang, lex in lexicons.items() if tok in lex]
        for lang in langs:
            memberships[lang] = memberships.get(lang, 0) + 1
        if len(langs) == 1:
            votes[langs[0]] = votes.get(langs[0], 0) + 1
    if len(votes) >= 2:
        return "mixed"
    if len(votes) == 1:
        lang = next(iter(votes))
        return "english" if lang == english_tag else "native"
    if memberships:
        best = max(memberships.values())
        leaders = [lang for lang, n in memberships.items() if n == best]
        if len(leaders) > 1:
            return "mixed"
        return "english" if leaders[0] == english_tag else "native"
    return "native"


def corpus_stats(pairs: Sequence[CsPair], lexicons: Mapping[str, set[str]],
                 english_tag: str = "en") -> CorpusStats:
    """Fractions of mixed / english / native queries in a switched corpus."""
    if not pairs:
        raise ContractError("empty corpus")
    counts = {"mixed": 0, "english": 0, "native": 0}
    for pair in pairs:
        counts[classify_sentence(pair.switched_query.tokens, lexicons, english_tag)] += 1
    n = len(pairs)
    return CorpusStats(counts["mixed"] / n, counts["english"] / n, counts["native"] / n)


# ---------------------------------------------------------------------------
# TSV interfaces
# ---------------------------------------------------------------------------


def load_pair_corpus(path) -> list[tuple[str, str, str]]:
    """Read query<TAB>label<TAB>language rows."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(f"{path}: line {lineno}: expected 3 tab-separated columns, got {len(cols)}")
            rows.append((cols[0], cols[1], cols[2]))
    return rows


def write_cs_corpus(pairs: Sequence[CsPair], path) -> None:
    """Write switched pairs plus comma-separated replaced-index columns."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write("\t".join([
                pair.switched_query.text(),
                pair.switched_label.text(),
                pair.lang or "",
                ",".join(str(i) for i in pair.replaced_query),
                ",".join(str(i) for i in pair.replaced_label),
            ]) + "\n")


def load_cs_corpus(path) -> list[CsPair]:
    """Read the five-column switched corpus back into pairs.

    The original text is not stored in the file, so the unswitched side is
    reconstructed only up to the replaced positions (kept as-switched).
    """
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 5:
                raise ParseError(f"{path}: line {lineno}: expected 5 tab-separated columns, got {len(cols)}")
            q_text, l_text, lang, s_q, s_l = cols
            lang = lang or None
            sq = TokenSeq(q_text.split(" "), lang=lang) if q_text else TokenSeq([], lang=lang)
            sl = TokenSeq(l_text.split(" "), lang=lang) if l_text else TokenSeq([], lang=lang)
            rep_q = tuple(int(i) for i in s_q.split(",")) if s_q else ()
            rep_l = tuple(int(i) for i in s_l.split(",")) if s_l else ()
            pairs.append(CsPair(sq, sl, sq, sl, rep_q, rep_l))
    return pairs
