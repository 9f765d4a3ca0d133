"""Masking, Adam optimization, continual pre-training, and fine-tuning.

Pre-training consumes code-switched pairs: both sides are masked, each
tower's forward serves the masked-token loss and (through its [CLS] state)
the in-batch similarity loss, and the weighted total is minimized with
Adam. Fine-tuning by default trains the similarity loss alone on clean
inputs. Every source of randomness flows from the config seed, so a run is
fully determined by (seed, config, corpus).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import tensor as T
from .codeswitch import CsPair
from .encoder import SentenceEncoder, forward_graph, mlm_logits_graph, pad_batch
from .errors import ConfigError, ContractError, TrainingDiverged
from .losses import LossBreakdown, total_loss
from .masking import MaskedView, mask_sequence
from .text import TokenSeq


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    steps: int = 2000
    lam: float = 0.2
    mask_prob: float = 0.15
    cmd_rate: float = 0.10
    seed: int = 0
    mode: str = "pretrain"
    margin: float = 0.0
    use_sim_loss: bool = True
    sim_on_clean: bool = False
    joint_finetune: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.mask_prob < 1.0:
            raise ConfigError(f"mask probability must be in [0, 1), got {self.mask_prob}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")
        if self.mode not in ("pretrain", "finetune"):
            raise ConfigError(f"mode must be 'pretrain' or 'finetune', got {self.mode!r}")
        if self.batch_size < 1 or self.steps < 0:
            raise ConfigError("batch_size must be >= 1 and steps >= 0")

    def as_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate, "beta1": self.beta1, "beta2": self.beta2,
            "adam_eps": self.adam_eps, "batch_size": self.batch_size, "steps": self.steps,
            "lam": self.lam, "mask_prob": self.mask_prob, "cmd_rate": self.cmd_rate,
            "seed": self.seed, "mode": self.mode, "margin": self.margin,
            "use_sim_loss": self.use_sim_loss, "sim_on_clean": self.sim_on_clean,
            "joint_finetune": self.joint_finetune,
        }


class AdamState:
    """Per-parameter first/second moments plus the shared step counter.

    A step whose gradient is identically zero for some tensor leaves that
    tensor (and its moments) untouched, so parameters only move when a
    gradient actually arrives.
    """

    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             cfg: TrainConfig) -> None:
        self.t += 1
        b1, b2, eps, lr = cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.learning_rate
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if not np.any(g):
                continue
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


@dataclass
class Checkpoint:
    """Everything needed to resume or serve: config, vocab, weights, state."""

    encoder: SentenceEncoder
    train_config: TrainConfig
    adam: Optional[AdamState] = None
    rng_state: Optional[dict] = None
    version: int = 1


def _prepare_side(encoder: SentenceEncoder, seqs: Sequence[TokenSeq], cfg: TrainConfig,
                  rng: np.random.Generator, masked: bool) -> tuple[list[MaskedView], np.ndarray, np.ndarray]:
    id_lists = [encoder.encode_ids(s) for s in seqs]
    if masked:
        views = [mask_sequence(ids, cfg.mask_prob, rng, encoder.config.vocab_size) for ids in id_lists]
    else:
        views = [MaskedView(np.asarray(ids, dtype=np.int64), np.empty(0, dtype=np.int64),
                            np.empty(0, dtype=np.int64)) for ids in id_lists]
    ids, mask = pad_batch([list(v.input_ids) for v in views], encoder.config.max_len)
    return views, ids, mask


def _mask_indices(views: list[MaskedView]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    batch_idx, pos_idx, targets = [], [], []
    for b, view in enumerate(views):
        batch_idx.extend([b] * view.num_masked)
        pos_idx.extend(view.positions.tolist())
        targets.extend(view.targets.tolist())
    return (np.asarray(batch_idx, dtype=np.int64), np.asarray(pos_idx, dtype=np.int64),
            np.asarray(targets, dtype=np.int64))


def train_step(batch: Sequence[CsPair], encoder: SentenceEncoder, adam: AdamState,
               cfg: TrainConfig, rng: np.random.Generator) -> LossBreakdown:
    """One optimization step over a batch of code-switched pairs.

    Masks both sides, runs the two tower passes on a fresh tape, combines
    the masked-token and similarity terms, backpropagates, and applies the
    Adam update. Raises :class:`TrainingDiverged` on a non-finite loss.
    """
    if cfg.mode != "pretrain":
        raise ContractError("train_step drives the pretrain objective; use finetune_step")
    if not batch:
        raise ContractError("empty batch")
    return _optimize(encoder, adam, cfg, rng,
                     [p.switched_query for p in batch], [p.switched_label for p in batch],
                     masked=True, lam=cfg.lam, use_sim=cfg.use_sim_loss)


def finetune_step(batch: Sequence[tuple[TokenSeq, TokenSeq]], encoder: SentenceEncoder,
                  adam: AdamState, cfg: TrainConfig, rng: np.random.Generator) -> LossBreakdown:
    """Similarity-only step on clean inputs (joint mode re-enables masking)."""
    if not batch:
        raise ContractError("empty batch")
    return _optimize(encoder, adam, cfg, rng,
                     [q for q, _ in batch], [l for _, l in batch],
                     masked=cfg.joint_finetune,
                     lam=cfg.lam if cfg.joint_finetune else 0.0, use_sim=True)


def _optimize(encoder: SentenceEncoder, adam: AdamState, cfg: TrainConfig,
              rng: np.random.Generator, q_seqs: Sequence[TokenSeq], l_seqs: Sequence[TokenSeq],
              masked: bool, lam: float, use_sim: bool) -> LossBreakdown:
    from .losses import sim_loss_graph

    B = len(q_seqs)
    q_views, q_ids, q_mask = _prepare_side(encoder, q_seqs, cfg, rng, masked=masked)
    l_views, l_ids, l_mask = _prepare_side(encoder, l_seqs, cfg, rng, masked=masked)

    tape = T.GradTape()
    P = {name: tape.watch(arr, name) for name, arr in encoder.params.items()}
    training = True
    hid_q, cls_q = forward_graph(P, q_ids, q_mask, encoder.config, training, rng)
    hid_l, cls_l = forward_graph(P, l_ids, l_mask, encoder.config, training, rng)

    xmlm_node = None
    if masked:
        qb, qp, qt = _mask_indices(q_views)
        lb, lp, lt = _mask_indices(l_views)
        terms = []
        if qt.size:
            terms.append(T.cross_entropy(mlm_logits_graph(P, hid_q, qb, qp), qt, reduction="sum"))
        if lt.size:
            terms.append(T.cross_entropy(mlm_logits_graph(P, hid_l, lb, lp), lt, reduction="sum"))
        if terms:
            xmlm_sum = terms[0] if len(terms) == 1 else T.add(terms[0], terms[1])
            xmlm_node = T.scale(xmlm_sum, 1.0 / B)

    sim_node = None
    if use_sim:
        if masked and cfg.sim_on_clean:
            # Ablation mode: similarity on an extra clean pass instead of the
            # masked towers.
            _, cq_ids, cq_mask = _prepare_side(encoder, q_seqs, cfg, rng, masked=False)
            _, cl_ids, cl_mask = _prepare_side(encoder, l_seqs, cfg, rng, masked=False)
            _, cls_q = forward_graph(P, cq_ids, cq_mask, encoder.config, training, rng)
            _, cls_l = forward_graph(P, cl_ids, cl_mask, encoder.config, training, rng)
        sim_node = sim_loss_graph(cls_q, cls_l, margin=cfg.margin)

    loss_node = None
    if xmlm_node is not None and lam != 0.0:
        loss_node = T.scale(xmlm_node, lam)
    if sim_node is not None:
        loss_node = sim_node if loss_node is None else T.add(loss_node, sim_node)
    xmlm_val = xmlm_node.item() if xmlm_node is not None else 0.0
    sim_val = sim_node.item() if sim_node is not None else 0.0
    if loss_node is None:
        # Nothing to optimize this step (no masked positions, no sim term).
        return total_loss(xmlm=xmlm_val, sim=sim_val, lam=lam)

    if not np.isfinite(xmlm_val) or not np.isfinite(sim_val):
        raise TrainingDiverged(
            f"non-finite loss at step {adam.t + 1}: xmlm={xmlm_val}, sim={sim_val}")
    grads = T.backward(tape, loss_node)
    adam.step(encoder.params, grads, cfg)
    return total_loss(xmlm=xmlm_val, sim=sim_val, lam=lam)


LogCallback = Callable[[int, LossBreakdown], None]


def _shuffled_batches(n_items: int, batch_size: int, steps: int,
                      rng: np.random.Generator) -> list[list[int]]:
    """Deterministic schedule of index batches covering shuffled epochs."""
    batches: list[list[int]] = []
    order: list[int] = []
    while len(batches) < steps:
        if not order:
            order = list(rng.permutation(n_items))
        take = order[:batch_size]
        order = order[batch_size:]
        batches.append(take)
    return batches


def continual_pretrain(corpus: Sequence[CsPair], encoder: SentenceEncoder, cfg: TrainConfig,
                       log: Optional[LogCallback] = None) -> Checkpoint:
    """Run the pre-training loop over shuffled batches of switched pairs."""
    if not corpus:
        raise ConfigError("empty corpus")
    cfg = replace(cfg, mode="pretrain")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1,)))
    adam = AdamState(encoder.params)
    for step, idx in enumerate(_shuffled_batches(len(corpus), cfg.batch_size, cfg.steps, rng), start=1):
        breakdown = train_step([corpus[i] for i in idx], encoder, adam, cfg, rng)
        if log is not None:
            log(step, breakdown)
    return Checkpoint(encoder=encoder, train_config=cfg, adam=adam,
                      rng_state=rng.bit_generator.state)


def finetune(pairs: Sequence[tuple[TokenSeq, TokenSeq]], encoder: SentenceEncoder,
             cfg: TrainConfig, log: Optional[LogCallback] = None) -> Checkpoint:
    """Fine-tune with the similarity loss only (lambda 0, no masking) by
    default; ``joint_finetune`` keeps the masked objective in the mix."""
    if not pairs:
        raise ConfigError("empty corpus")
    cfg = replace(cfg, mode="finetune")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(2,)))
    adam = AdamState(encoder.params)
    for step, idx in enumerate(_shuffled_batches(len(pairs), cfg.batch_size, cfg.steps, rng), start=1):
        breakdown = finetune_step([pairs[i] for i in idx], encoder, adam, cfg, rng)
        if log is not None:
            log(step, breakdown)
    return Checkpoint(encoder=encoder, train_config=cfg, adam=adam,
                      rng_state=rng.bit_generator.state)
