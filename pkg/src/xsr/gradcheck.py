"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

# Relative error uses a floor so that near-zero gradients are compared on an
# absolute scale where finite-difference roundoff (~1e-10 at h=1e-5) cannot
# dominate the ratio.
REL_FLOOR = 1e-5


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    per_param: dict[str, float]

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_err <= tol


def finite_difference_grads(loss_fn: Callable[[Mapping[str, np.ndarray]], float],
                            params: Mapping[str, np.ndarray],
                            h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences of ``loss_fn`` w.r.t. every entry of ``params``.

    ``loss_fn`` must be deterministic (no dropout, fixed masking) so the
    two-sided evaluations differ only through the perturbed entry.
    """
    work = {name: arr.copy() for name, arr in params.items()}
    grads = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn(work)
            flat[i] = orig - h
            down = loss_fn(work)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def compare_grads(analytic: Mapping[str, np.ndarray],
                  numeric: Mapping[str, np.ndarray]) -> GradCheckReport:
    per_param = {}
    worst = ("", 0.0)
    for name in analytic:
        a = analytic[name]
        b = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), REL_FLOOR)
        rel = np.abs(a - b) / denom
        m = float(rel.max()) if rel.size else 0.0
        per_param[name] = m
        if m >= worst[1]:
            worst = (name, m)
    return GradCheckReport(max_rel_err=worst[1], worst_param=worst[0], per_param=per_param)


def check_gradients(loss_fn: Callable[[Mapping[str, np.ndarray]], float],
                    params: Mapping[str, np.ndarray],
                    analytic: Mapping[str, np.ndarray],
                    h: float = 1e-5) -> GradCheckReport:
    numeric = finite_difference_grads(loss_fn, params, h=h)
    return compare_grads(analytic, numeric)


def encoder_total_loss_check(d_model: int = 8, n_layers: int = 2, n_heads: int = 2,
                             d_ff: int = 16, lam: float = 0.2, seed: int = 0,
                             h: float = 1e-5) -> GradCheckReport:
    """End-to-end check: tape gradients of the weighted total objective on a
    small encoder versus central finite differences.

    The batch, masking, and parameters are fixed up front so the loss is a
    deterministic function of the parameters (dropout off).
    """
    from . import tensor as T
    from .encoder import (EncoderConfig, SentenceEncoder, forward_graph, init_params,
                          mlm_logits_graph, pad_batch)
    from .losses import sim_loss_graph
    from .masking import mask_sequence
    from .text import build_vocab, tokenize

    sentences = [
        ("parcel status shows failed", "delivery failed what now"),
        ("track my parcel today", "where is my delivery"),
        ("refund for failed delivery", "money back after failure"),
    ]
    corpus = [tokenize(t) for pair in sentences for t in pair]
    vocab = build_vocab(corpus, max_size=64)
    cfg = EncoderConfig(d_model=d_model, n_layers=n_layers, n_heads=n_heads, d_ff=d_ff,
                        max_len=12, vocab_size=len(vocab), dropout=0.0)
    enc = SentenceEncoder(cfg, init_params(cfg, seed), vocab)

    rng = np.random.default_rng(seed + 1)
    q_views = [mask_sequence(enc.encode_ids(tokenize(q)), 0.35, rng, cfg.vocab_size) for q, _ in sentences]
    l_views = [mask_sequence(enc.encode_ids(tokenize(l)), 0.35, rng, cfg.vocab_size) for _, l in sentences]
    q_ids, q_mask = pad_batch([list(v.input_ids) for v in q_views], cfg.max_len)
    l_ids, l_mask = pad_batch([list(v.input_ids) for v in l_views], cfg.max_len)

    def gather(views):
        b, p, t = [], [], []
        for bi, v in enumerate(views):
            b.extend([bi] * v.num_masked)
            p.extend(v.positions.tolist())
            t.extend(v.targets.tolist())
        return np.asarray(b), np.asarray(p), np.asarray(t)

    qb, qp, qt = gather(q_views)
    lb, lp, lt = gather(l_views)
    B = len(sentences)

    def build_loss(P) -> T.Tensor:
        hid_q, cls_q = forward_graph(P, q_ids, q_mask, cfg, training=False, rng=None)
        hid_l, cls_l = forward_graph(P, l_ids, l_mask, cfg, training=False, rng=None)
        terms = []
        if qt.size:
            terms.append(T.cross_entropy(mlm_logits_graph(P, hid_q, qb, qp), qt, reduction="sum"))
        if lt.size:
            terms.append(T.cross_entropy(mlm_logits_graph(P, hid_l, lb, lp), lt, reduction="sum"))
        xmlm = T.scale(terms[0] if len(terms) == 1 else T.add(terms[0], terms[1]), 1.0 / B)
        sim = sim_loss_graph(cls_q, cls_l)
        return T.add(T.scale(xmlm, lam), sim)

    def loss_fn(params: Mapping[str, np.ndarray]) -> float:
        P = {name: T.Tensor(arr) for name, arr in params.items()}
        return build_loss(P).item()

    tape = T.GradTape()
    P = {name: tape.watch(arr, name) for name, arr in enc.params.items()}
    analytic = T.backward(tape, build_loss(P))
    return check_gradients(loss_fn, enc.params, analytic, h=h)
