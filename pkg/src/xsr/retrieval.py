"""Knowledge-base storage, exact cosine indexing, and top-k retrieval.

Entry vectors are pre-normalized to unit length so dot products are
cosines. Search is exhaustive (exact) with a deterministic tie rule:
equal scores rank by ascending entry id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .codeswitch import BilingualDictionary, SwitchPolicy, build_cs_knowledge, load_pair_corpus
from .encoder import EncoderConfig, SentenceEncoder
from .errors import CheckpointError, ConfigError, ContractError, DomainError, IndexingError
from .losses import LossBreakdown
from .text import TokenSeq, Vocabulary, build_vocab, tokenize
from .trainer import TrainConfig, continual_pretrain, finetune


@dataclass
class KbEntry:
    entry_id: int
    query: str
    label: str
    lang: str


@dataclass
class KnowledgeBase:
    """Query-label store; ids are dense from 0 in insertion order."""

    entries: list[KbEntry]

    def __post_init__(self):
        for i, e in enumerate(self.entries):
            if e.entry_id != i:
                raise ContractError(f"knowledge-base ids must be dense from 0 (saw {e.entry_id} at {i})")

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[str, str, str]]) -> "KnowledgeBase":
        return cls([KbEntry(i, q, l, lang) for i, (q, l, lang) in enumerate(rows)])

    @classmethod
    def load_tsv(cls, path) -> "KnowledgeBase":
        return cls.from_rows(load_pair_corpus(path))


@dataclass
class Index:
    """Unit-normalized entry vectors plus the checkpoint fingerprint."""

    vectors: np.ndarray
    fingerprint: str
    side: str = "query"

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise ContractError(f"index vectors must be 2-D, got shape {self.vectors.shape}")
        norms = np.linalg.norm(self.vectors, axis=1)
        if norms.size and np.abs(norms - 1.0).max() > 1e-9:
            raise ContractError("index rows must be unit-normalized")

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass
class RetrievalResult:
    """Ranked (entry id, cosine score) hits, scores non-increasing."""

    hits: list[tuple[int, float]]

    def __post_init__(self):
        for (i0, s0), (i1, s1) in zip(self.hits, self.hits[1:]):
            if s1 > s0 or (s1 == s0 and i1 <= i0):
                raise ContractError("hits must be sorted by descending score, ties by ascending id")
        if self.hits and not all(-1.0 <= s <= 1.0 for _, s in self.hits):
            raise ContractError("cosine scores must lie in [-1, 1]")

    def ids(self) -> list[int]:
        return [i for i, _ in self.hits]

    def scores(self) -> list[float]:
        return [s for _, s in self.hits]


def build_index(kb: KnowledgeBase, encoder: SentenceEncoder, side: str = "query") -> Index:
    """Encode every entry in eval mode and L2-normalize the rows."""
    if len(kb) == 0:
        raise ContractError("cannot index an empty knowledge base")
    if side not in ("query", "label"):
        raise ConfigError(f"index side must be 'query' or 'label', got {side!r}")
    texts = [e.query if side == "query" else e.label for e in kb.entries]
    vectors = encoder.encode_batch(texts)
    norms = np.linalg.norm(vectors, axis=1)
    for e, n in zip(kb.entries, norms):
        if n == 0.0:
            raise IndexingError(f"entry {e.entry_id} ({texts[e.entry_id]!r}) encoded to a zero vector")
    return Index(vectors / norms[:, None], encoder.fingerprint(), side)


def index_from_vectors(vectors: np.ndarray, fingerprint: str = "", side: str = "query") -> Index:
    """Index over externally supplied vectors (normalized here)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        raise IndexingError(f"row {int(np.flatnonzero(norms == 0.0)[0])} is a zero vector")
    return Index(vectors / norms[:, None], fingerprint, side)


def search_vector(index: Index, vector: np.ndarray, k: int) -> RetrievalResult:
    """Exact top-k by cosine against all index rows."""
    if k < 1:
        raise ContractError(f"k must be at least 1, got {k}")
    if len(index) == 0:
        raise ContractError("empty index")
    v = np.asarray(vector, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise DomainError("cannot search with a zero-norm query vector")
    scores = index.vectors @ (v / n)
    scores = np.clip(scores, -1.0, 1.0)
    order = np.lexsort((np.arange(len(scores)), -scores))[:k]
    return RetrievalResult([(int(i), float(scores[i])) for i in order])


def retrieve_top_k(query_text: str, index: Index, encoder: SentenceEncoder, k: int) -> RetrievalResult:
    """Encode the query and rank all entries; k of 1 is the arg-max match."""
    return search_vector(index, encoder.encode_sentence(query_text), k)


# ---------------------------------------------------------------------------
# end-to-end pipeline
# ---------------------------------------------------------------------------


@dataclass
class PipelineResult:
    results: list[RetrievalResult]
    encoder: SentenceEncoder
    index: Index
    cs_pairs: list
    pretrain_log: list[LossBreakdown] = field(default_factory=list)
    finetune_log: list[LossBreakdown] = field(default_factory=list)


def _tokenized_pairs(kb: KnowledgeBase, script_mode: str) -> list[tuple[TokenSeq, TokenSeq]]:
    return [(tokenize(e.query, script_mode, lang=e.lang), tokenize(e.label, script_mode, lang=e.lang))
            for e in kb.entries]


def pipeline_vocab(kb: KnowledgeBase, cs_pairs, config: EncoderConfig) -> Vocabulary:
    """Vocabulary over the original plus the code-switched corpus."""
    stream = []
    for q, l in _tokenized_pairs(kb, config.script_mode):
        stream.extend([q, l])
    for p in cs_pairs:
        stream.extend([p.switched_query, p.switched_label])
    return build_vocab(stream, config.vocab_size)


def run_pipeline(user_queries: Sequence[str], kb: KnowledgeBase,
                 dictionaries: BilingualDictionary | Sequence[BilingualDictionary],
                 policy: SwitchPolicy, encoder_config: EncoderConfig,
                 pretrain_config: TrainConfig, finetune_config: Optional[TrainConfig] = None,
                 k: int = 1, index_side: str = "query") -> PipelineResult:
    """Code-switch the knowledge, continually pre-train, fine-tune, index,
    and answer every user query with exact top-k retrieval."""
    pairs = _tokenized_pairs(kb, encoder_config.script_mode)
    cs_pairs = build_cs_knowledge(pairs, dictionaries, policy)
    vocab = pipeline_vocab(kb, cs_pairs, encoder_config)
    encoder = SentenceEncoder.initialize(encoder_config, vocab, pretrain_config.seed)

    pretrain_log: list[LossBreakdown] = []
    continual_pretrain(cs_pairs, encoder, pretrain_config,
                       log=lambda _, b: pretrain_log.append(b))
    finetune_log: list[LossBreakdown] = []
    if finetune_config is not None:
        finetune(pairs, encoder, finetune_config, log=lambda _, b: finetune_log.append(b))

    index = build_index(kb, encoder, side=index_side)
    results = [retrieve_top_k(q, index, encoder, k) for q in user_queries]
    return PipelineResult(results, encoder, index, cs_pairs, pretrain_log, finetune_log)


# ---------------------------------------------------------------------------
# index persistence (header line + little-endian float64 payload)
# ---------------------------------------------------------------------------

INDEX_FORMAT = "xsr-index"
INDEX_VERSION = 1


def save_index(index: Index, path) -> None:
    header = {"format": INDEX_FORMAT, "version": INDEX_VERSION, "side": index.side,
              "fingerprint": index.fingerprint, "shape": list(index.vectors.shape)}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(index.vectors, dtype="<f8").tobytes())


def load_index(path) -> Index:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt index header") from exc
    if header.get("format") != INDEX_FORMAT or header.get("version") != INDEX_VERSION:
        raise CheckpointError(f"{path}: not a readable index file")
    shape = tuple(header["shape"])
    expected = int(np.prod(shape, dtype=np.int64)) * 8
    if len(payload) != expected:
        raise CheckpointError(f"{path}: truncated index payload")
    vectors = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return Index(vectors, header["fingerprint"], header["side"])


# ---------------------------------------------------------------------------
# result records (line-delimited)
# ---------------------------------------------------------------------------


def write_results(queries: Sequence[str], results: Sequence[RetrievalResult], path) -> None:
    """One JSON record per (query, rank): query index, text, rank, id, score."""
    with open(path, "w", encoding="utf-8") as fh:
        for qi, (query, result) in enumerate(zip(queries, results)):
            for rank, (entry_id, score) in enumerate(result.hits, start=1):
                fh.write(json.dumps({
                    "query_index": qi, "query": query, "rank": rank,
                    "entry_id": entry_id, "score": score,
                }, ensure_ascii=False) + "\n")


def load_results(path) -> dict[int, list[int]]:
    """Ranked entry ids per query index, from a results file."""
    ranked: dict[int, list[int]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            ranked.setdefault(int(rec["query_index"]), []).append(int(rec["entry_id"]))
    return ranked
