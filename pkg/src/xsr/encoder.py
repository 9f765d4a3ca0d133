"""Siamese transformer encoder producing [CLS] sentence vectors.

One parameter set serves both the query tower and the label tower: callers
run :meth:`SentenceEncoder.forward_batch` twice on the same object, which is
the weight-sharing contract. Blocks are pre-norm with GELU feed-forward,
learned position embeddings, and an MLM output projection tied to the token
embedding matrix.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError
from .text import PAD_ID, TokenSeq, Vocabulary, encode, tokenize

LAYER_NORM_EPS = 1e-5
INIT_STD = 0.02


@dataclass
class EncoderConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 64
    vocab_size: int = 4096
    dropout: float = 0.1
    script_mode: str = "whitespace"

    def __post_init__(self):
        if self.d_model <= 0 or self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} must be a positive multiple of n_heads {self.n_heads}")
        if self.max_len < 2:
            raise ConfigError(f"max_len must be at least 2, got {self.max_len}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.n_layers < 1 or self.d_ff < 1 or self.vocab_size < 6:
            raise ConfigError("n_layers/d_ff must be positive and vocab_size at least 6")

    def as_dict(self) -> dict:
        return {
            "d_model": self.d_model, "n_layers": self.n_layers, "n_heads": self.n_heads,
            "d_ff": self.d_ff, "max_len": self.max_len, "vocab_size": self.vocab_size,
            "dropout": self.dropout, "script_mode": self.script_mode,
        }


def param_shapes(cfg: EncoderConfig) -> dict[str, tuple]:
    d, ff = cfg.d_model, cfg.d_ff
    shapes: dict[str, tuple] = {
        "tok_emb": (cfg.vocab_size, d),
        "pos_emb": (cfg.max_len, d),
    }
    for i in range(cfg.n_layers):
        p = f"layer{i}."
        shapes[p + "ln1_g"] = (d,)
        shapes[p + "ln1_b"] = (d,)
        shapes[p + "wq"] = (d, d)
        shapes[p + "bq"] = (d,)
        shapes[p + "wk"] = (d, d)
        shapes[p + "bk"] = (d,)
        shapes[p + "wv"] = (d, d)
        shapes[p + "bv"] = (d,)
        shapes[p + "wo"] = (d, d)
        shapes[p + "bo"] = (d,)
        shapes[p + "ln2_g"] = (d,)
        shapes[p + "ln2_b"] = (d,)
        shapes[p + "w1"] = (d, ff)
        shapes[p + "b1"] = (ff,)
        shapes[p + "w2"] = (ff, d)
        shapes[p + "b2"] = (d,)
    shapes["lnf_g"] = (d,)
    shapes["lnf_b"] = (d,)
    shapes["mlm_bias"] = (cfg.vocab_size,)
    return shapes


def init_params(cfg: EncoderConfig, seed: int) -> dict[str, np.ndarray]:
    """Normal(0, 0.02^2) weights truncated (clipped) at two standard
    deviations; layer-norm gammas 1, betas and biases 0. Deterministic
    under the seed."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg).items():
        base = name.split(".")[-1]
        if base in ("ln1_g", "ln2_g", "lnf_g"):
            params[name] = np.ones(shape, dtype=np.float64)
        elif base in ("ln1_b", "ln2_b", "lnf_b", "bq", "bk", "bv", "bo", "b1", "b2", "mlm_bias"):
            params[name] = np.zeros(shape, dtype=np.float64)
        else:
            w = rng.normal(0.0, INIT_STD, size=shape)
            params[name] = np.clip(w, -2.0 * INIT_STD, 2.0 * INIT_STD)
    return params


def params_fingerprint(params: Mapping[str, np.ndarray]) -> str:
    """SHA-256 over the float32 image of all parameters (stored precision)."""
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(params[name], dtype="<f4").tobytes())
    return h.hexdigest()


def forward_graph(P: Mapping[str, T.Tensor], ids: np.ndarray, key_mask: np.ndarray,
                  cfg: EncoderConfig, training: bool,
                  rng: Optional[np.random.Generator]) -> tuple[T.Tensor, T.Tensor]:
    """Transformer forward over a (B, L) id batch.

    ``P`` maps parameter names to tensors (tape leaves during training,
    plain tensors at inference). ``key_mask`` is 1.0 at real positions and
    0.0 at PAD; masked attention logits get ``MASK_FILL`` added before
    softmax. Returns hidden states (B, L, d) and the [CLS] slice (B, d).
    """
    B, L = ids.shape
    if L > cfg.max_len:
        raise ContractError(f"sequence length {L} exceeds max_len {cfg.max_len}")
    d, H = cfg.d_model, cfg.n_heads
    dh = d // H
    p = cfg.dropout

    h = T.add(T.gather_rows(P["tok_emb"], ids), T.slice_rows(P["pos_emb"], L))
    h = T.dropout(h, p, rng, training)
    attn_bias = ((1.0 - key_mask) * T.MASK_FILL).reshape(B, 1, 1, L)

    for i in range(cfg.n_layers):
        pre = f"layer{i}."
        x = T.layer_norm(h, P[pre + "ln1_g"], P[pre + "ln1_b"], LAYER_NORM_EPS)
        q = T.add(T.matmul(x, P[pre + "wq"]), P[pre + "bq"])
        k = T.add(T.matmul(x, P[pre + "wk"]), P[pre + "bk"])
        v = T.add(T.matmul(x, P[pre + "wv"]), P[pre + "bv"])
        qh = T.transpose(T.reshape(q, (B, L, H, dh)), (0, 2, 1, 3))
        kh = T.transpose(T.reshape(k, (B, L, H, dh)), (0, 2, 1, 3))
        vh = T.transpose(T.reshape(v, (B, L, H, dh)), (0, 2, 1, 3))
        scores = T.scale(T.matmul(qh, T.transpose(kh, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
        scores = T.add(scores, attn_bias)
        att = T.softmax(scores, axis=-1)
        att = T.dropout(att, p, rng, training)
        ctx = T.reshape(T.transpose(T.matmul(att, vh), (0, 2, 1, 3)), (B, L, d))
        proj = T.add(T.matmul(ctx, P[pre + "wo"]), P[pre + "bo"])
        h = T.add(h, T.dropout(proj, p, rng, training))

        x = T.layer_norm(h, P[pre + "ln2_g"], P[pre + "ln2_b"], LAYER_NORM_EPS)
        f = T.gelu(T.add(T.matmul(x, P[pre + "w1"]), P[pre + "b1"]))
        f = T.add(T.matmul(f, P[pre + "w2"]), P[pre + "b2"])
        h = T.add(h, T.dropout(f, p, rng, training))

    h = T.layer_norm(h, P["lnf_g"], P["lnf_b"], LAYER_NORM_EPS)
    cls = T.select(h, axis=1, index=0)
    return h, cls


def mlm_logits_graph(P: Mapping[str, T.Tensor], hidden: T.Tensor,
                     batch_idx: np.ndarray, pos_idx: np.ndarray) -> T.Tensor:
    """Vocabulary logits at selected (batch, position) slots, tied to the
    token embedding matrix."""
    states = T.gather_positions(hidden, batch_idx, pos_idx)
    return T.add(T.matmul(states, T.transpose(P["tok_emb"], (1, 0))), P["mlm_bias"])


def pad_batch(id_lists: list[list[int]], max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad encoded id lists with PAD and build the key mask."""
    if not id_lists:
        raise ContractError("empty batch")
    L = max(len(ids) for ids in id_lists)
    if L > max_len:
        raise ContractError(f"sequence length {L} exceeds max_len {max_len}")
    ids = np.full((len(id_lists), L), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(id_lists), L), dtype=np.float64)
    for r, seq in enumerate(id_lists):
        ids[r, :len(seq)] = seq
        mask[r, :len(seq)] = 1.0
    return ids, mask


class SentenceEncoder:
    """Configuration, parameters, and vocabulary bundled for encoding."""

    def __init__(self, config: EncoderConfig, params: dict[str, np.ndarray], vocab: Vocabulary):
        if len(vocab) > config.vocab_size:
            raise ConfigError(f"vocabulary size {len(vocab)} exceeds configured {config.vocab_size}")
        expected = param_shapes(config)
        for name, shape in expected.items():
            if name not in params or params[name].shape != shape:
                got = params[name].shape if name in params else None
                raise ConfigError(f"parameter {name}: expected shape {shape}, got {got}")
        self.config = config
        self.params = params
        self.vocab = vocab

    @classmethod
    def initialize(cls, config: EncoderConfig, vocab: Vocabulary, seed: int) -> "SentenceEncoder":
        """Fresh parameters sized to the actual vocabulary (config.vocab_size
        acts as the upper bound)."""
        if len(vocab) > config.vocab_size:
            raise ConfigError(f"vocabulary size {len(vocab)} exceeds configured {config.vocab_size}")
        cfg = EncoderConfig(**{**config.as_dict(), "vocab_size": len(vocab)})
        return cls(cfg, init_params(cfg, seed), vocab)

    def fingerprint(self) -> str:
        return params_fingerprint(self.params)

    def as_tensors(self, tape: Optional[T.GradTape] = None) -> dict[str, T.Tensor]:
        if tape is None:
            return {name: T.Tensor(arr) for name, arr in self.params.items()}
        return {name: tape.watch(arr, name) for name, arr in self.params.items()}

    def forward(self, ids, attention_mask=None, mode: str = "eval",
                rng: Optional[np.random.Generator] = None) -> tuple[np.ndarray, np.ndarray]:
        """Single-sequence forward; returns (hidden L x d, cls vector)."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ContractError(f"forward expects a 1-D id sequence, got shape {ids.shape}")
        mask = attention_mask
        if mask is None:
            mask = (ids != PAD_ID).astype(np.float64)
        hidden, cls = self.forward_batch(ids[None, :], np.asarray(mask, dtype=np.float64)[None, :],
                                         mode=mode, rng=rng)
        return hidden[0], cls[0]

    def forward_batch(self, ids: np.ndarray, key_mask: np.ndarray, mode: str = "eval",
                      rng: Optional[np.random.Generator] = None) -> tuple[np.ndarray, np.ndarray]:
        if mode not in ("train", "eval"):
            raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
        training = mode == "train"
        hidden, cls = forward_graph(self.as_tensors(), np.asarray(ids, dtype=np.int64),
                                    np.asarray(key_mask, dtype=np.float64),
                                    self.config, training, rng)
        return hidden.value, cls.value

    def encode_ids(self, seq: TokenSeq) -> list[int]:
        return encode(seq, self.vocab)

    def encode_sentence(self, text: str) -> np.ndarray:
        """tokenize -> encode ids -> eval-mode forward -> [CLS] vector."""
        return self.encode_batch([text])[0]

    def encode_batch(self, texts: list[str]) -> np.ndarray:
        """Eval-mode [CLS] vectors for a list of texts, one row each."""
        if not texts:
            return np.zeros((0, self.config.d_model), dtype=np.float64)
        id_lists = [self.encode_ids(tokenize(t, self.config.script_mode)) for t in texts]
        out = np.zeros((len(texts), self.config.d_model), dtype=np.float64)
        # Group by length so padding never mixes into the batch.
        by_len: dict[int, list[int]] = {}
        for i, ids in enumerate(id_lists):
            by_len.setdefault(len(ids), []).append(i)
        for _, rows in sorted(by_len.items()):
            ids, mask = pad_batch([id_lists[i] for i in rows], self.config.max_len)
            _, cls = self.forward_batch(ids, mask, mode="eval")
            for r, i in enumerate(rows):
                out[i] = cls[r]
        return out
