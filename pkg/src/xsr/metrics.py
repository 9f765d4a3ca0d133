"""Retrieval and similarity evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, ParseError


@dataclass
class EvalRecord:
    """One evaluated query: its ranked retrieved ids and the gold set."""

    query_id: int
    ranked_ids: list[int]
    gold_ids: set[int]
    lang: str = ""

    def __post_init__(self):
        if not self.gold_ids:
            raise ContractError(f"record {self.query_id}: gold set may not be empty")
        if len(set(self.ranked_ids)) != len(self.ranked_ids):
            raise ContractError(f"record {self.query_id}: ranked list contains duplicates")


def _require_records(records: Sequence[EvalRecord]) -> None:
    if not records:
        raise ContractError("no evaluation records")


def accuracy_at_k(records: Sequence[EvalRecord], k: int) -> float:
    """Fraction of records whose top-k contains at least one gold id."""
    _require_records(records)
    if k < 1:
        raise ContractError(f"k must be at least 1, got {k}")
    hits = sum(1 for r in records if any(i in r.gold_ids for i in r.ranked_ids[:k]))
    return hits / len(records)


def precision_at_k(records: Sequence[EvalRecord], k: int) -> float:
    """Mean over records of |gold intersected with top-k| / k."""
    _require_records(records)
    if k < 1:
        raise ContractError(f"k must be at least 1, got {k}")
    return sum(len(set(r.ranked_ids[:k]) & r.gold_ids) / k for r in records) / len(records)


def mrr_at_n(records: Sequence[EvalRecord], n: int = 10) -> float:
    """Mean reciprocal rank of the first gold id within the top n (0 if absent)."""
    _require_records(records)
    if n < 1:
        raise ContractError(f"n must be at least 1, got {n}")
    total = 0.0
    for r in records:
        for rank, rid in enumerate(r.ranked_ids[:n], start=1):
            if rid in r.gold_ids:
                total += 1.0 / rank
                break
    return total / len(records)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n; tied values share the mean of their rank positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation: Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError(f"inputs must be equal-length 1-D sequences, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise ContractError("need at least two points")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    vx = (dx * dx).sum()
    vy = (dy * dy).sum()
    if vx == 0.0 or vy == 0.0:
        raise ContractError("rank correlation is undefined for constant input")
    return float((dx * dy).sum() / np.sqrt(vx * vy))


def load_gold_tsv(path) -> dict[int, set[int]]:
    """Gold relevance file: query id <TAB> comma-separated gold ids."""
    gold: dict[int, set[int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise ParseError(f"{path}: line {lineno}: expected 2 tab-separated columns")
            try:
                qid = int(cols[0])
                ids = {int(t) for t in cols[1].split(",") if t}
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: non-integer id") from exc
            if not ids:
                raise ParseError(f"{path}: line {lineno}: empty gold set")
            gold[qid] = ids
    return gold


def records_from_ranked(ranked: dict[int, list[int]], gold: dict[int, set[int]],
                        langs: dict[int, str] | None = None) -> list[EvalRecord]:
    """Join ranked retrieval output with a gold file on query id."""
    records = []
    for qid in sorted(gold):
        if qid not in ranked:
            raise ContractError(f"no retrieval output for query id {qid}")
        records.append(EvalRecord(qid, ranked[qid], gold[qid],
                                  lang=(langs or {}).get(qid, "")))
    return records
