"""Deterministic synthetic bilingual benchmark for desk-scale experiments.

The corpus simulates an FAQ store: each intent has a label built from two
keywords and many paraphrase queries mixing those keywords with filler
words. A complete bilingual dictionary maps every source word to a distinct
target-language form ("z" + word), so code-switching can touch any
position; the small type inventory keeps every word frequent enough that a
10% switch rate actually exposes the target forms during training.
Held-out paraphrases (and a code-mixed variant of them built once with a
fixed seed, identical for every experiment arm) form the test queries; the
gold set of a query is all knowledge-base entries of its intent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codeswitch import BilingualDictionary, SwitchPolicy, code_switch
from .retrieval import KnowledgeBase
from .text import TokenSeq

LANG_TAG = "syn"
LABEL_MARKER = "guide"


@dataclass
class BenchQuery:
    text: str
    gold_ids: set[int]
    lang: str


@dataclass
class SyntheticBenchmark:
    kb: KnowledgeBase
    dictionary: BilingualDictionary
    test_mono: list[BenchQuery]
    test_mixed: list[BenchQuery]

    def kb_rows(self) -> list[tuple[str, str, str]]:
        return [(e.query, e.label, e.lang) for e in self.kb.entries]


def make_benchmark(n_intents: int = 20, paraphrases: int = 10, test_per_intent: int = 3,
                   n_fillers: int = 12, seed: int = 0, mix_rate: float = 0.5) -> SyntheticBenchmark:
    rng = np.random.default_rng(seed)
    fillers = [f"f{j:02d}" for j in range(n_fillers)]
    rows: list[tuple[str, str, str]] = []
    test_mono: list[BenchQuery] = []

    for intent in range(n_intents):
        keywords = [f"w{2 * intent + j:03d}" for j in range(2)]
        label = " ".join(keywords + [LABEL_MARKER])

        def paraphrase() -> str:
            extra = [fillers[int(i)] for i in rng.choice(n_fillers, size=3, replace=False)]
            return " ".join(rng.permutation(keywords + extra))

        gold = set()
        for _ in range(paraphrases):
            gold.add(len(rows))
            rows.append((paraphrase(), label, LANG_TAG))
        for _ in range(test_per_intent):
            test_mono.append(BenchQuery(paraphrase(), gold, LANG_TAG))

    vocab_words = [f"w{i:03d}" for i in range(2 * n_intents)] + fillers + [LABEL_MARKER]
    dictionary = BilingualDictionary("syn-tgt", {w: ["z" + w] for w in vocab_words})

    mix_policy = SwitchPolicy(rate=mix_rate, seed=seed + 104729, skip_languages=frozenset())
    mix_rng = np.random.default_rng(seed + 104729)
    test_mixed = []
    for tq in test_mono:
        switched, _ = code_switch(TokenSeq(tq.text.split(" "), lang=LANG_TAG),
                                  dictionary, mix_policy, mix_rng)
        test_mixed.append(BenchQuery(switched.text(), tq.gold_ids, LANG_TAG))

    return SyntheticBenchmark(KnowledgeBase.from_rows(rows), dictionary,
                              test_mono, test_mixed)
