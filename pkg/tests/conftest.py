"""Shared fixtures; heavyweight pipeline runs are computed once per session."""

import pytest

from xsr import tensor as T
from xsr.codeswitch import SwitchPolicy
from xsr.encoder import EncoderConfig
from xsr.reporting import SweepTask, sweep
from xsr.synthetic import make_benchmark
from xsr.trainer import TrainConfig


@pytest.fixture(autouse=True, scope="session")
def strict_finite():
    T.set_strict_finite(True)
    yield
    T.set_strict_finite(False)


@pytest.fixture(scope="session")
def bench():
    return make_benchmark()


# Desk-scale settings shared by every training-based test: small model,
# short schedules, a learning rate that converges within them.
BENCH_ENCODER = EncoderConfig(d_model=32, n_layers=2, n_heads=4, d_ff=64,
                              max_len=12, vocab_size=512, dropout=0.1)


def bench_pretrain(seed: int, steps: int = 500, **overrides) -> TrainConfig:
    base = dict(learning_rate=1e-3, batch_size=16, steps=steps, lam=0.2,
                mask_prob=0.15, cmd_rate=0.10, seed=seed, mode="pretrain")
    base.update(overrides)
    return TrainConfig(**base)


def bench_finetune(seed: int, steps: int = 150, **overrides) -> TrainConfig:
    base = dict(learning_rate=3e-4, batch_size=16, steps=steps, lam=0.0,
                mask_prob=0.15, cmd_rate=0.10, seed=seed, mode="finetune")
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def cmd_rate_sweep_report(bench):
    """Full-pipeline sweep of the switch rate over {0.0, 0.10}, 3 seeds,
    evaluated on the code-mixed held-out queries. Reused by the sweep tests,
    the pipeline A/B test, and the code-switching acceptance criterion."""
    task = SweepTask(kb=bench.kb, dictionaries=[bench.dictionary],
                     policy=SwitchPolicy(rate=0.10, seed=0),
                     encoder_config=BENCH_ENCODER,
                     pretrain_config=bench_pretrain(0),
                     finetune_config=bench_finetune(0),
                     test_queries=bench.test_mixed, k=1)
    return sweep("cmd_rate", [0.0, 0.10], task, seeds=(0, 1, 2))


@pytest.fixture(scope="session")
def small_trained_encoder(bench):
    """One short pre-trained encoder for tests that need non-degenerate
    weights without caring about accuracy."""
    from xsr.retrieval import run_pipeline

    out = run_pipeline([], bench.kb, bench.dictionary, SwitchPolicy(rate=0.10, seed=0),
                       BENCH_ENCODER, bench_pretrain(0, steps=60), None, k=1)
    return out.encoder
