"""Estimator-style front end over the full retrieval pipeline.

``CodeSwitchRetriever`` follows the scikit-learn conventions (constructor
holds hyperparameters, ``fit`` learns, ``get_params``/``set_params`` work,
fitted attributes end in an underscore), so the pipeline composes with the
wider ecosystem: ``transform`` yields sentence vectors and ``predict``
returns the best-matching knowledge-base entry id per query.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .codeswitch import BilingualDictionary, SwitchPolicy
from .encoder import EncoderConfig
from .errors import ContractError
from .retrieval import KnowledgeBase, RetrievalResult, retrieve_top_k, run_pipeline
from .trainer import TrainConfig


def _validate_pairs(X) -> list[tuple[str, str, str]]:
    rows = []
    for i, row in enumerate(X):
        if len(row) == 2:
            q, l = row
            lang = ""
        elif len(row) == 3:
            q, l, lang = row
        else:
            raise ContractError(f"row {i}: expected (query, label[, lang]), got {row!r}")
        if not isinstance(q, str) or not isinstance(l, str):
            raise ContractError(f"row {i}: query and label must be strings")
        rows.append((q, l, lang))
    if not rows:
        raise ContractError("fit requires at least one (query, label) pair")
    return rows


class CodeSwitchRetriever(BaseEstimator):
    """Dense FAQ retriever trained with code-switched continual pre-training.

    Parameters mirror the pipeline configuration; ``dictionaries`` is a list
    of :class:`BilingualDictionary` used to build the switched corpus.
    """

    def __init__(self, dictionaries=None, cmd_rate=0.10, lam=0.2, mask_prob=0.15,
                 margin=0.0, d_model=64, n_layers=2, n_heads=4, d_ff=256, max_len=64,
                 vocab_size=4096, dropout=0.1, learning_rate=1e-5, batch_size=32,
                 pretrain_steps=2000, finetune_steps=500, index_side="query",
                 skip_languages=("en",), seed=0, k=1):
        self.dictionaries = dictionaries
        self.cmd_rate = cmd_rate
        self.lam = lam
        self.mask_prob = mask_prob
        self.margin = margin
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.max_len = max_len
        self.vocab_size = vocab_size
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.pretrain_steps = pretrain_steps
        self.finetune_steps = finetune_steps
        self.index_side = index_side
        self.skip_languages = skip_languages
        self.seed = seed
        self.k = k

    def _encoder_config(self) -> EncoderConfig:
        return EncoderConfig(d_model=self.d_model, n_layers=self.n_layers, n_heads=self.n_heads,
                             d_ff=self.d_ff, max_len=self.max_len, vocab_size=self.vocab_size,
                             dropout=self.dropout)

    def _train_config(self, mode: str) -> TrainConfig:
        steps = self.pretrain_steps if mode == "pretrain" else self.finetune_steps
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                           steps=steps, lam=self.lam, mask_prob=self.mask_prob,
                           cmd_rate=self.cmd_rate, seed=self.seed, mode=mode, margin=self.margin)

    def fit(self, X, y=None):
        """Build the switched corpus, pre-train, fine-tune, and index.

        ``X`` is a sequence of (query, label) or (query, label, lang) rows.
        """
        rows = _validate_pairs(X)
        dictionaries = self.dictionaries
        if dictionaries is None:
            dictionaries = [BilingualDictionary("identity", {})]
        policy = SwitchPolicy(rate=self.cmd_rate, seed=self.seed,
                              skip_languages=frozenset(self.skip_languages))
        kb = KnowledgeBase.from_rows(rows)
        out = run_pipeline([], kb, dictionaries, policy, self._encoder_config(),
                           self._train_config("pretrain"),
                           self._train_config("finetune") if self.finetune_steps > 0 else None,
                           k=self.k, index_side=self.index_side)
        self.kb_ = kb
        self.encoder_ = out.encoder
        self.index_ = out.index
        self.pretrain_log_ = out.pretrain_log
        self.finetune_log_ = out.finetune_log
        return self

    def retrieve(self, X, k=None) -> list[RetrievalResult]:
        """Ranked (entry id, score) hits for each query text."""
        check_is_fitted(self, "index_")
        k = self.k if k is None else k
        return [retrieve_top_k(q, self.index_, self.encoder_, k) for q in X]

    def predict(self, X) -> np.ndarray:
        """Best-matching knowledge-base entry id per query."""
        return np.array([r.hits[0][0] for r in self.retrieve(X, k=1)], dtype=np.int64)

    def transform(self, X) -> np.ndarray:
        """Sentence vectors, one row per input text."""
        check_is_fitted(self, "encoder_")
        return self.encoder_.encode_batch(list(X))

    def score(self, X, y) -> float:
        """Top-1 accuracy: fraction of queries whose best hit is in the
        query's gold id collection (scalar ids also accepted)."""
        preds = self.predict(X)
        hits = 0
        for pred, gold in zip(preds, y):
            gold_set = {int(gold)} if np.isscalar(gold) else {int(g) for g in gold}
            hits += int(int(pred) in gold_set)
        return hits / len(preds)
