"""Training loop behavior: determinism, convergence, Adam, schedules."""

import numpy as np
import pytest

from xsr.codeswitch import SwitchPolicy, build_cs_knowledge
from xsr.encoder import EncoderConfig, SentenceEncoder
from xsr.errors import ConfigError, ContractError
from xsr.metrics import EvalRecord, accuracy_at_k
from xsr.retrieval import run_pipeline
from xsr.text import build_vocab, tokenize
from xsr.trainer import AdamState, TrainConfig, continual_pretrain, finetune, train_step

from conftest import BENCH_ENCODER, bench_finetune, bench_pretrain


def tiny_setup(seed=0, dropout=0.1):
    texts = [("how to pay order", "payment methods guide"),
             ("parcel status failed", "delivery failure help"),
             ("refund my money", "refund policy guide"),
             ("change my address", "account address update")]
    pairs = [(tokenize(q, lang="xx"), tokenize(l, lang="xx")) for q, l in texts]
    d = {w: ["z" + w] for q, l in pairs for w in list(q.tokens) + list(l.tokens)}
    from xsr.codeswitch import BilingualDictionary
    cs = build_cs_knowledge(pairs, BilingualDictionary("xx-zz", d), SwitchPolicy(rate=0.3, seed=seed))
    stream = [s for p in cs for s in (p.switched_query, p.switched_label)] + \
             [s for pair in pairs for s in pair]
    vocab = build_vocab(stream, max_size=128)
    cfg = EncoderConfig(d_model=16, n_layers=2, n_heads=4, d_ff=32, max_len=12,
                        vocab_size=128, dropout=dropout)
    enc = SentenceEncoder.initialize(cfg, vocab, seed)
    return cs, pairs, enc


class TestTrainStep:
    def test_deterministic_trajectories(self):
        losses = []
        for _ in range(2):
            cs, _, enc = tiny_setup(seed=5)
            cfg = TrainConfig(learning_rate=1e-3, batch_size=4, steps=10, lam=0.2,
                              mask_prob=0.15, seed=5)
            log = []
            continual_pretrain(cs, enc, cfg, log=lambda s, b: log.append((b.xmlm, b.sim, b.total)))
            losses.append(log)
        assert losses[0] == losses[1]

    def test_losses_finite_every_step(self):
        cs, _, enc = tiny_setup()
        cfg = TrainConfig(learning_rate=1e-3, batch_size=4, steps=25, lam=0.2,
                          mask_prob=0.15, seed=0)
        log = []
        continual_pretrain(cs, enc, cfg, log=lambda s, b: log.append(b))
        assert len(log) == 25
        for b in log:
            assert np.isfinite(b.xmlm) and np.isfinite(b.sim) and np.isfinite(b.total)

    def test_overfit_one_batch(self):
        cs, _, enc = tiny_setup(dropout=0.0)
        cfg = TrainConfig(learning_rate=1e-3, batch_size=4, steps=1, lam=0.2,
                          mask_prob=0.15, seed=0)
        adam = AdamState(enc.params)
        rng = np.random.default_rng(0)
        # repeat the identical batch; masking rng still advances, so compare
        # a clean-step probe before and after
        first = train_step(cs, enc, adam, cfg, np.random.default_rng(1))
        for _ in range(50):
            train_step(cs, enc, adam, cfg, np.random.default_rng(1))
        last = train_step(cs, enc, adam, cfg, np.random.default_rng(1))
        assert last.total < first.total

    def test_breakdown_identity_every_step(self):
        cs, _, enc = tiny_setup()
        cfg = TrainConfig(learning_rate=1e-3, batch_size=4, steps=15, lam=0.2,
                          mask_prob=0.15, seed=0)
        log = []
        continual_pretrain(cs, enc, cfg, log=lambda s, b: log.append(b))
        for b in log:
            assert abs(b.total - (b.lam * b.xmlm + b.sim)) <= 1e-12

    def test_wrong_mode_rejected(self):
        cs, _, enc = tiny_setup()
        cfg = TrainConfig(learning_rate=1e-3, mode="finetune", lam=0.0)
        with pytest.raises(ContractError):
            train_step(cs, enc, AdamState(enc.params), cfg, np.random.default_rng(0))

    def test_numerical_blowup_aborts_with_diagnostic(self):
        from xsr.errors import XsrError
        cs, _, enc = tiny_setup()
        enc.params["tok_emb"] *= 1e200  # force an overflow inside the forward
        cfg = TrainConfig(learning_rate=1e-3, batch_size=4, steps=1, lam=0.2,
                          mask_prob=0.15, seed=0)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(XsrError):
                train_step(cs, enc, AdamState(enc.params), cfg, np.random.default_rng(0))


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        _, _, enc = tiny_setup()
        adam = AdamState(enc.params)
        cfg = TrainConfig(learning_rate=1e-2)
        # warm the moments with a real-looking gradient first
        grads = {k: np.full_like(v, 0.01) for k, v in enc.params.items()}
        adam.step(enc.params, grads, cfg)
        before = {k: v.copy() for k, v in enc.params.items()}
        adam.step(enc.params, {k: np.zeros_like(v) for k, v in enc.params.items()}, cfg)
        for k in before:
            assert np.abs(enc.params[k] - before[k]).max() <= 1e-12

    def test_nonzero_gradient_moves_params(self):
        _, _, enc = tiny_setup()
        adam = AdamState(enc.params)
        cfg = TrainConfig(learning_rate=1e-2)
        before = enc.params["tok_emb"].copy()
        grads = {k: np.zeros_like(v) for k, v in enc.params.items()}
        grads["tok_emb"] = np.ones_like(before)
        adam.step(enc.params, grads, cfg)
        assert np.abs(enc.params["tok_emb"] - before).max() > 1e-4

    def test_bias_corrected_first_step_size(self):
        params = {"w": np.zeros(3)}
        adam = AdamState(params)
        cfg = TrainConfig(learning_rate=0.1)
        adam.step(params, {"w": np.array([1.0, -1.0, 2.0])}, cfg)
        # first Adam step moves each coordinate by ~lr * sign(g)
        np.testing.assert_allclose(params["w"], [-0.1, 0.1, -0.1], atol=1e-6)


class TestSchedules:
    def test_zero_steps_keeps_initialization(self):
        cs, _, enc = tiny_setup()
        init = {k: v.copy() for k, v in enc.params.items()}
        cfg = TrainConfig(learning_rate=1e-3, steps=0, seed=0)
        continual_pretrain(cs, enc, cfg)
        for k, v in enc.params.items():
            np.testing.assert_array_equal(v, init[k])

    def test_shuffling_seed_deterministic(self):
        from xsr.trainer import _shuffled_batches
        a = _shuffled_batches(37, 8, 12, np.random.default_rng(3))
        b = _shuffled_batches(37, 8, 12, np.random.default_rng(3))
        assert a == b
        c = _shuffled_batches(37, 8, 12, np.random.default_rng(4))
        assert a != c

    def test_batches_cover_epochs(self):
        from xsr.trainer import _shuffled_batches
        batches = _shuffled_batches(10, 4, 5, np.random.default_rng(0))
        seen = [i for b in batches for i in b]
        assert len(batches) == 5
        # first two epochs cover all ten items
        assert sorted(seen[:10]) == list(range(10))

    def test_empty_corpus_rejected(self):
        _, _, enc = tiny_setup()
        with pytest.raises(ConfigError):
            continual_pretrain([], enc, TrainConfig(learning_rate=1e-3))
        with pytest.raises(ConfigError):
            finetune([], enc, TrainConfig(learning_rate=1e-3, mode="finetune", lam=0.0))


class TestFinetune:
    def test_reports_zero_xmlm(self):
        _, pairs, enc = tiny_setup()
        cfg = TrainConfig(learning_rate=1e-3, batch_size=4, steps=12, lam=0.0,
                          mode="finetune", seed=0)
        log = []
        finetune(pairs, enc, cfg, log=lambda s, b: log.append(b))
        assert len(log) == 12
        for b in log:
            assert b.xmlm == 0.0
            assert b.total == b.sim

    def test_joint_finetune_masks(self):
        _, pairs, enc = tiny_setup()
        cfg = TrainConfig(learning_rate=1e-3, batch_size=4, steps=8, lam=0.2,
                          mode="finetune", seed=0, joint_finetune=True, mask_prob=0.4)
        log = []
        finetune(pairs, enc, cfg, log=lambda s, b: log.append(b))
        assert any(b.xmlm > 0.0 for b in log)

    def test_finetune_improves_over_pretrain_only(self, bench):
        """Three-seed mean: adding the fine-tuning stage lifts top-1 accuracy
        on held-out paraphrases above the pre-train-only checkpoint."""
        texts = [q.text for q in bench.test_mono]

        def acc(out):
            recs = [EvalRecord(i, r.ids(), q.gold_ids)
                    for i, (q, r) in enumerate(zip(bench.test_mono, out.results))]
            return accuracy_at_k(recs, 1)

        pre_only, pre_ft = [], []
        for seed in (0, 1, 2):
            pre = bench_pretrain(seed, steps=120)
            ft = bench_finetune(seed, steps=120, learning_rate=1e-3)
            pol = SwitchPolicy(rate=0.10, seed=seed)
            pre_only.append(acc(run_pipeline(texts, bench.kb, bench.dictionary, pol,
                                             BENCH_ENCODER, pre, None, k=1)))
            pre_ft.append(acc(run_pipeline(texts, bench.kb, bench.dictionary, pol,
                                           BENCH_ENCODER, pre, ft, k=1)))
        assert np.mean(pre_ft) > np.mean(pre_only)


class TestObjectiveFlags:
    def test_sim_on_clean_runs_and_differs(self):
        sims = []
        for flag in (False, True):
            cs, _, enc = tiny_setup(seed=7)
            cfg = TrainConfig(learning_rate=1e-3, batch_size=4, steps=6, lam=0.2,
                              mask_prob=0.3, seed=7, sim_on_clean=flag)
            log = []
            continual_pretrain(cs, enc, cfg, log=lambda s, b: log.append(b.sim))
            sims.append(log)
        assert sims[0] != sims[1]

    def test_margin_changes_similarity_term(self):
        sims = []
        for margin in (0.0, 0.1):
            cs, _, enc = tiny_setup(seed=8)
            cfg = TrainConfig(learning_rate=1e-3, batch_size=4, steps=4, lam=0.2,
                              mask_prob=0.3, seed=8, margin=margin)
            log = []
            continual_pretrain(cs, enc, cfg, log=lambda s, b: log.append(b.sim))
            sims.append(log)
        assert sims[1][0] > sims[0][0]

    def test_without_sim_loss_reports_zero_sim(self):
        cs, _, enc = tiny_setup(seed=9)
        cfg = TrainConfig(learning_rate=1e-3, batch_size=4, steps=5, lam=0.2,
                          mask_prob=0.3, seed=9, use_sim_loss=False)
        log = []
        continual_pretrain(cs, enc, cfg, log=lambda s, b: log.append(b))
        for b in log:
            assert b.sim == 0.0
            assert b.total == b.lam * b.xmlm

