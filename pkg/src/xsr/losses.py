"""Training objectives: masked-token losses, cosine similarity, and the
in-batch contrastive similarity loss, combined into a weighted total.

The in-batch loss for pair i is ``-log(exp(s_ii) / sum_j exp(s_ij))`` over
the batch cosine matrix: the positive plus every other label in the batch
in the denominator, no temperature. The total objective is
``lambda * xmlm + sim``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import SentenceEncoder, forward_graph, mlm_logits_graph
from .errors import ConfigError, ContractError, DomainError
from .masking import MaskedView
from .text import PAD_ID


@dataclass
class LossBreakdown:
    """Per-step loss components; always satisfies total == lam*xmlm + sim."""

    xmlm: float
    sim: float
    total: float
    lam: float

    def __post_init__(self):
        if self.xmlm < 0 or self.sim < 0:
            raise ContractError("loss components must be non-negative")
        if abs(self.total - (self.lam * self.xmlm + self.sim)) > 1e-12:
            raise ContractError("loss breakdown identity violated")


def total_loss(xmlm: float, sim: float, lam: float) -> LossBreakdown:
    """Weighted combination ``lam * xmlm + sim``."""
    if lam < 0:
        raise ConfigError(f"lambda must be non-negative, got {lam}")
    return LossBreakdown(xmlm=xmlm, sim=sim, total=lam * xmlm + sim, lam=lam)


# ---------------------------------------------------------------------------
# masked-token losses
# ---------------------------------------------------------------------------


def mlm_loss(logits: np.ndarray, targets) -> float:
    """Sum over masked positions of -log softmax-probability of the target.

    One logit row per masked position; zero masked positions give 0.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2:
        raise ContractError(f"expected 2-D logits, got shape {logits.shape}")
    if targets.shape != (logits.shape[0],):
        raise ContractError(f"{logits.shape[0]} logit rows but {targets.size} targets")
    if logits.shape[0] == 0:
        return 0.0
    mx = logits.max(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(np.exp(logits - mx).sum(axis=1))
    return float((lse - logits[np.arange(len(targets)), targets]).sum())


def _masked_logits(encoder: SentenceEncoder, view: MaskedView) -> np.ndarray:
    ids = view.input_ids[None, :]
    mask = (ids != PAD_ID).astype(np.float64)
    P = encoder.as_tensors()
    hidden, _ = forward_graph(P, ids, mask, encoder.config, training=False, rng=None)
    if view.num_masked == 0:
        return np.zeros((0, encoder.config.vocab_size), dtype=np.float64)
    logits = mlm_logits_graph(P, hidden, np.zeros(view.num_masked, dtype=np.int64), view.positions)
    return logits.value


def xmlm_loss(query_view: MaskedView, label_view: MaskedView, encoder: SentenceEncoder) -> float:
    """Masked-token loss of the query pass plus that of the label pass.

    Each side conditions only on its own observed part: the two towers run
    independently over the shared parameters.
    """
    q = mlm_loss(_masked_logits(encoder, query_view), query_view.targets)
    l = mlm_loss(_masked_logits(encoder, label_view), label_view.targets)
    return q + l


def tlm_loss(pair_view: MaskedView, encoder: SentenceEncoder) -> float:
    """Masked-token loss over a concatenated sentence pair (baseline
    objective, not used by the trainer)."""
    if len(pair_view.input_ids) > encoder.config.max_len:
        raise ContractError(
            f"concatenated pair length {len(pair_view.input_ids)} exceeds max_len {encoder.config.max_len}")
    return mlm_loss(_masked_logits(encoder, pair_view), pair_view.targets)


# ---------------------------------------------------------------------------
# similarity losses
# ---------------------------------------------------------------------------


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two sentence vectors, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DomainError("cosine of a zero-norm vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_matrix(v_q: np.ndarray, v_l: np.ndarray) -> np.ndarray:
    """Pairwise cosines: rows are queries, columns are labels."""
    v_q = np.asarray(v_q, dtype=np.float64)
    v_l = np.asarray(v_l, dtype=np.float64)
    nq = np.linalg.norm(v_q, axis=1, keepdims=True)
    nl = np.linalg.norm(v_l, axis=1, keepdims=True)
    if np.any(nq == 0.0) or np.any(nl == 0.0):
        raise DomainError("cosine of a zero-norm vector is undefined")
    return (v_q / nq) @ (v_l / nl).T


def sim_loss_from_matrix(sims: np.ndarray, margin: float = 0.0) -> tuple[np.ndarray, float]:
    """Per-pair terms and mean of the in-batch loss, from a cosine matrix.

    Row i's positive sits on the diagonal; an optional additive margin is
    subtracted from the positive inside the softmax. Batch size 1 has an
    empty negative set, so its term is exactly 0.
    """
    sims = np.asarray(sims, dtype=np.float64)
    if sims.ndim != 2 or sims.shape[0] != sims.shape[1]:
        raise ContractError(f"expected a square similarity matrix, got {sims.shape}")
    n = sims.shape[0]
    if n < 1:
        raise ContractError("batch size must be at least 1")
    adjusted = sims.copy()
    if margin:
        adjusted[np.arange(n), np.arange(n)] -= margin
    mx = adjusted.max(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(np.exp(adjusted - mx).sum(axis=1))
    terms = lse - adjusted[np.arange(n), np.arange(n)]
    return terms, float(terms.mean())


def sim_loss(vectors: list[tuple[np.ndarray, np.ndarray]], margin: float = 0.0) -> float:
    """Mean in-batch contrastive loss over (query, label) vector pairs."""
    if not vectors:
        raise ContractError("batch size must be at least 1")
    v_q = np.stack([np.asarray(q, dtype=np.float64) for q, _ in vectors])
    v_l = np.stack([np.asarray(l, dtype=np.float64) for _, l in vectors])
    _, mean = sim_loss_from_matrix(cosine_matrix(v_q, v_l), margin=margin)
    return mean


def sim_loss_graph(cls_q: T.Tensor, cls_l: T.Tensor, margin: float = 0.0) -> T.Tensor:
    """Tape node of the in-batch loss from the two [CLS] batches."""
    B = cls_q.shape[0]
    qn = T.l2_normalize_rows(cls_q)
    ln = T.l2_normalize_rows(cls_l)
    sims = T.matmul(qn, T.transpose(ln, (1, 0)))
    if margin:
        sims = T.sub(sims, margin * np.eye(B))
    return T.cross_entropy(sims, np.arange(B), reduction="mean")
