"""Checkpoint container: round trips, corruption, version/shape mismatches."""

import json

import numpy as np
import pytest

from xsr.checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from xsr.encoder import EncoderConfig, SentenceEncoder, init_params
from xsr.errors import CheckpointError
from xsr.text import build_vocab, tokenize
from xsr.trainer import AdamState, Checkpoint, TrainConfig


def make_ckpt(seed=0, d_model=16, with_adam=True):
    vocab = build_vocab([tokenize("alpha beta gamma delta")], max_size=16)
    cfg = EncoderConfig(d_model=d_model, n_layers=1, n_heads=2, d_ff=16, max_len=8,
                        vocab_size=len(vocab), dropout=0.0)
    enc = SentenceEncoder(cfg, init_params(cfg, seed), vocab)
    adam = AdamState(enc.params) if with_adam else None
    if adam:
        adam.t = 3
        adam.m = {k: np.full_like(v, 0.125) for k, v in enc.params.items()}
    return Checkpoint(encoder=enc, train_config=TrainConfig(learning_rate=1e-3), adam=adam,
                      rng_state={"bit_generator": "PCG64", "state": {"state": 1, "inc": 2},
                                 "has_uint32": 0, "uinteger": 0})


class TestRoundTrip:
    def test_stored_precision_bit_identical(self, tmp_path):
        ckpt = make_ckpt()
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(ckpt, p1)
        loaded = load_checkpoint(p1)
        save_checkpoint(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()
        for name, arr in loaded.encoder.params.items():
            np.testing.assert_array_equal(
                arr, ckpt.encoder.params[name].astype(np.float32).astype(np.float64))

    def test_vocab_and_configs_survive(self, tmp_path):
        ckpt = make_ckpt()
        path = tmp_path / "x.ckpt"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.encoder.vocab.id_to_token == ckpt.encoder.vocab.id_to_token
        assert loaded.encoder.config.as_dict() == ckpt.encoder.config.as_dict()
        assert loaded.train_config.as_dict() == ckpt.train_config.as_dict()
        assert loaded.rng_state == ckpt.rng_state

    def test_adam_state_round_trips(self, tmp_path):
        ckpt = make_ckpt(with_adam=True)
        path = tmp_path / "x.ckpt"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.adam is not None and loaded.adam.t == 3
        np.testing.assert_allclose(loaded.adam.m["tok_emb"], 0.125)

    def test_no_adam_optional(self, tmp_path):
        ckpt = make_ckpt(with_adam=False)
        path = tmp_path / "x.ckpt"
        save_checkpoint(ckpt, path)
        assert load_checkpoint(path).adam is None


class TestCorruption:
    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "x.ckpt"
        save_checkpoint(make_ckpt(), path)
        data = path.read_bytes()
        path.write_bytes(data[:len(data) - 64])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_garbage_header(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"\x00\x01\x02 not json\n1234")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_wrong_format_name(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(json.dumps({"format": "other"}).encode() + b"\n")
        with pytest.raises(CheckpointError, match="not a checkpoint"):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "x.ckpt"
        save_checkpoint(make_ckpt(), path)
        raw = path.read_bytes()
        header_line, payload = raw.split(b"\n", 1)
        header = json.loads(header_line)
        header["version"] = FORMAT_VERSION + 1
        path.write_bytes(json.dumps(header, sort_keys=True).encode() + b"\n" + payload)
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)


class TestConfigMismatch:
    def test_expected_config_checked(self, tmp_path):
        path = tmp_path / "x.ckpt"
        save_checkpoint(make_ckpt(d_model=16), path)
        other = EncoderConfig(d_model=32, n_layers=1, n_heads=2, d_ff=16, max_len=8,
                              vocab_size=9, dropout=0.0)
        with pytest.raises(CheckpointError, match="configuration"):
            load_checkpoint(path, expected_config=other)

    def test_header_config_vs_array_shapes(self, tmp_path):
        # tamper the header to claim a wider model than the stored arrays
        path = tmp_path / "x.ckpt"
        save_checkpoint(make_ckpt(d_model=16), path)
        raw = path.read_bytes()
        header_line, payload = raw.split(b"\n", 1)
        header = json.loads(header_line)
        header["encoder"]["d_model"] = 32
        path.write_bytes(json.dumps(header, sort_keys=True).encode() + b"\n" + payload)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
