"""Hyperparameter sweep harness and similarity-matrix export."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .codeswitch import BilingualDictionary, SwitchPolicy
from .encoder import EncoderConfig, SentenceEncoder
from .errors import ConfigError, ContractError
from .losses import cosine_matrix
from .metrics import EvalRecord, accuracy_at_k
from .retrieval import KnowledgeBase, run_pipeline
from .synthetic import BenchQuery
from .trainer import TrainConfig

SWEEPABLE = {"lambda": 0.2, "cmd_rate": 0.10}


@dataclass
class SweepTask:
    """Everything a sweep needs to re-run the full pipeline per value."""

    kb: KnowledgeBase
    dictionaries: Sequence[BilingualDictionary]
    policy: SwitchPolicy
    encoder_config: EncoderConfig
    pretrain_config: TrainConfig
    finetune_config: Optional[TrainConfig]
    test_queries: list[BenchQuery]
    k: int = 1
    index_side: str = "query"


@dataclass
class SweepRow:
    value: float
    mean_metric: float
    per_lang: dict[str, float]
    is_default: bool


@dataclass
class SweepReport:
    parameter: str
    values: list[float]
    rows: list[SweepRow]
    metric_name: str = "accuracy@k"
    default_value: float = field(default=0.0)

    def __post_init__(self):
        if len(self.rows) != len(self.values):
            raise ContractError("one row per swept value required")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ContractError("swept values must be strictly increasing")

    def to_csv(self, path) -> None:
        langs = sorted({lang for row in self.rows for lang in row.per_lang})
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["parameter", "value", self.metric_name, "is_default"] + langs)
            for row in self.rows:
                writer.writerow(
                    [self.parameter, repr(row.value), repr(row.mean_metric), int(row.is_default)]
                    + [repr(row.per_lang[l]) if l in row.per_lang else "" for l in langs])

    def format_text(self) -> str:
        lines = [f"sweep over {self.parameter} (default {self.default_value})"]
        for row in self.rows:
            marker = " (default)" if row.is_default else ""
            langs = " ".join(f"{l}={v:.4f}" for l, v in sorted(row.per_lang.items()))
            lines.append(f"  {self.parameter}={row.value:g}{marker}: "
                         f"{self.metric_name}={row.mean_metric:.4f} {langs}".rstrip())
        return "\n".join(lines)


def _evaluate(task: SweepTask, policy: SwitchPolicy, pretrain: TrainConfig,
              finetune_cfg: Optional[TrainConfig]) -> tuple[float, dict[str, float]]:
    texts = [tq.text for tq in task.test_queries]
    out = run_pipeline(texts, task.kb, list(task.dictionaries), policy,
                       task.encoder_config, pretrain, finetune_cfg,
                       k=task.k, index_side=task.index_side)
    records = [EvalRecord(i, res.ids(), tq.gold_ids, lang=tq.lang)
               for i, (tq, res) in enumerate(zip(task.test_queries, out.results))]
    overall = accuracy_at_k(records, task.k)
    per_lang = {}
    for lang in sorted({r.lang for r in records}):
        per_lang[lang] = accuracy_at_k([r for r in records if r.lang == lang], task.k)
    return overall, per_lang


def sweep(parameter: str, values: Sequence[float], task: SweepTask,
          seeds: Sequence[int] = (0,)) -> SweepReport:
    """Re-run the whole pipeline for each swept value (same seeds across
    values) and report mean accuracy@k with a per-language breakdown."""
    if parameter not in SWEEPABLE:
        raise ConfigError(f"sweepable parameters are {sorted(SWEEPABLE)}, got {parameter!r}")
    if len(values) < 2:
        raise ConfigError("sweep needs at least two values")
    ordered = sorted(float(v) for v in values)
    if len(set(ordered)) != len(ordered):
        raise ConfigError("swept values must be distinct")
    if not seeds:
        raise ConfigError("at least one seed required")

    rows = []
    for value in ordered:
        metrics = []
        lang_acc: dict[str, list[float]] = {}
        for seed in seeds:
            policy = replace(task.policy, seed=seed)
            pretrain = replace(task.pretrain_config, seed=seed)
            finetune_cfg = replace(task.finetune_config, seed=seed) if task.finetune_config else None
            if parameter == "lambda":
                pretrain = replace(pretrain, lam=value)
            else:
                policy = replace(policy, rate=value)
                pretrain = replace(pretrain, cmd_rate=value)
            overall, per_lang = _evaluate(task, policy, pretrain, finetune_cfg)
            metrics.append(overall)
            for lang, acc in per_lang.items():
                lang_acc.setdefault(lang, []).append(acc)
        rows.append(SweepRow(value, float(np.mean(metrics)),
                             {l: float(np.mean(v)) for l, v in lang_acc.items()},
                             is_default=value == SWEEPABLE[parameter]))
    return SweepReport(parameter, ordered, rows, metric_name=f"accuracy@{task.k}",
                       default_value=SWEEPABLE[parameter])


def export_sim_matrix(queries: Sequence[str], labels: Sequence[str],
                      encoder: SentenceEncoder, path) -> np.ndarray:
    """Write the query x label cosine matrix as CSV with text headers."""
    if not queries or not labels:
        raise ContractError("need at least one query and one label")
    sims = cosine_matrix(encoder.encode_batch(list(queries)), encoder.encode_batch(list(labels)))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(labels))
        for q, row in zip(queries, sims):
            writer.writerow([q] + [repr(float(v)) for v in row])
    return sims
