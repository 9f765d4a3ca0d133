"""Command-line entry point.

One binary, subcommand style: build-cs, pretrain, finetune, index,
retrieve, eval, sweep, gradcheck, export-sim. A config file supplies
defaults, flags override it, and the XSR_SEED environment variable
overrides the seed last. All outputs go to explicit --out paths; input
files are never mutated.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .codeswitch import (BilingualDictionary, build_cs_knowledge, corpus_stats,
                         load_cs_corpus, load_dictionary, load_pair_corpus, write_cs_corpus)
from .config import AppConfig, dump_config, load_config
from .checkpoint import load_checkpoint, save_checkpoint
from .encoder import SentenceEncoder
from .errors import ConfigError, XsrError
from .gradcheck import encoder_total_loss_check
from .metrics import accuracy_at_k, load_gold_tsv, mrr_at_n, precision_at_k, records_from_ranked
from .reporting import SweepTask, export_sim_matrix, sweep
from .retrieval import (KnowledgeBase, build_index, load_results, retrieve_top_k,
                        save_index, write_results)
from .synthetic import BenchQuery
from .text import TokenSeq, build_vocab, save_vocab_file, tokenize
from .trainer import continual_pretrain, finetune


def _load_app_config(args) -> AppConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else AppConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    env_seed = os.environ.get("XSR_SEED")
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"XSR_SEED must be an integer, got {env_seed!r}") from exc
    return cfg.validate()


def _require_inputs(*paths) -> None:
    for p in paths:
        if p and not Path(p).exists():
            raise ConfigError(f"input path does not exist: {p}")


def _load_dictionaries(paths) -> list[BilingualDictionary]:
    if not paths:
        raise ConfigError("at least one --dict is required")
    _require_inputs(*paths)
    return [load_dictionary(p) for p in paths]


def _open_log(path):
    if not path:
        return None, None
    fh = open(path, "w", encoding="utf-8")

    def log(step, b):
        fh.write(json.dumps({"step": step, "xmlm": b.xmlm, "sim": b.sim,
                             "total": b.total, "lambda": b.lam}) + "\n")

    return fh, log


def _raw_pairs(rows) -> list[tuple[TokenSeq, TokenSeq]]:
    """Space-split pair columns verbatim (keeps build-cs byte-stable at rate 0)."""
    pairs = []
    for q, l, lang in rows:
        pairs.append((TokenSeq([t for t in q.split(" ") if t], lang=lang),
                      TokenSeq([t for t in l.split(" ") if t], lang=lang)))
    return pairs


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_build_cs(args) -> int:
    cfg = _load_app_config(args)
    _require_inputs(args.pairs)
    dictionaries = _load_dictionaries(args.dict)
    rate = cfg.cmd_rate if args.rate is None else args.rate
    policy = replace(cfg.switch_policy(), rate=rate, seed=cfg.seed)
    rows = load_pair_corpus(args.pairs)
    cs_pairs = build_cs_knowledge(_raw_pairs(rows), dictionaries, policy)
    write_cs_corpus(cs_pairs, args.out)
    lexicons = {"en": set().union(*(set(d.entries) for d in dictionaries))}
    for d in dictionaries:
        lexicons[d.lang_pair] = {t for tgts in d.entries.values() for t in tgts}
    stats = corpus_stats(cs_pairs, lexicons)
    print(f"wrote {len(cs_pairs)} pairs to {args.out}")
    print(f"query mix: mixed={stats.mixed:.2%} english={stats.english:.2%} native={stats.native:.2%}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_app_config(args)
    _require_inputs(args.cs_corpus, args.pairs or None)
    cs_pairs = load_cs_corpus(args.cs_corpus)
    if not cs_pairs:
        raise ConfigError(f"empty corpus: {args.cs_corpus}")
    stream = [s for p in cs_pairs for s in (p.switched_query, p.switched_label)]
    if args.pairs:
        for q, l, lang in load_pair_corpus(args.pairs):
            stream.append(tokenize(q, cfg.script_mode, lang=lang))
            stream.append(tokenize(l, cfg.script_mode, lang=lang))
    vocab = build_vocab(stream, cfg.vocab_size)
    encoder = SentenceEncoder.initialize(cfg.encoder_config(), vocab, cfg.seed)
    train_cfg = cfg.train_config("pretrain")
    if args.steps is not None:
        train_cfg = replace(train_cfg, steps=args.steps)
    fh, log = _open_log(args.log)
    try:
        ckpt = continual_pretrain(cs_pairs, encoder, train_cfg, log=log)
    finally:
        if fh:
            fh.close()
    save_checkpoint(ckpt, args.out)
    if args.vocab_out:
        save_vocab_file(vocab, args.vocab_out)
    print(f"pretrained {train_cfg.steps} steps; checkpoint -> {args.out}")
    return 0


def cmd_finetune(args) -> int:
    cfg = _load_app_config(args)
    _require_inputs(args.pairs, args.ckpt)
    ckpt = load_checkpoint(args.ckpt)
    encoder = ckpt.encoder
    rows = load_pair_corpus(args.pairs)
    pairs = [(tokenize(q, encoder.config.script_mode, lang=lang),
              tokenize(l, encoder.config.script_mode, lang=lang)) for q, l, lang in rows]
    train_cfg = cfg.train_config("finetune")
    if args.steps is not None:
        train_cfg = replace(train_cfg, steps=args.steps)
    fh, log = _open_log(args.log)
    try:
        out = finetune(pairs, encoder, train_cfg, log=log)
    finally:
        if fh:
            fh.close()
    save_checkpoint(out, args.out)
    print(f"finetuned {train_cfg.steps} steps; checkpoint -> {args.out}")
    return 0


def cmd_index(args) -> int:
    _require_inputs(args.kb, args.ckpt)
    encoder = load_checkpoint(args.ckpt).encoder
    kb = KnowledgeBase.load_tsv(args.kb)
    index = build_index(kb, encoder, side=args.side)
    save_index(index, args.out)
    print(f"indexed {len(index)} entries -> {args.out}")
    return 0


def cmd_retrieve(args) -> int:
    _require_inputs(args.kb, args.ckpt, args.queries)
    encoder = load_checkpoint(args.ckpt).encoder
    kb = KnowledgeBase.load_tsv(args.kb)
    index = build_index(kb, encoder, side=args.side)
    queries = _read_query_file(args.queries)
    results = [retrieve_top_k(q.text, index, encoder, args.k) for q in queries]
    write_results([q.text for q in queries], results, args.out)
    for q, res in zip(queries, results):
        top_id, top_score = res.hits[0]
        entry = kb.entries[top_id]
        print(f"{q.text!r} -> #{top_id} {entry.query!r} (score {top_score:.4f})")
    return 0


def cmd_eval(args) -> int:
    _require_inputs(args.results, args.gold)
    ranked = load_results(args.results)
    gold = load_gold_tsv(args.gold)
    records = records_from_ranked(ranked, gold)
    for k in args.k:
        print(f"accuracy@{k}: {accuracy_at_k(records, k):.4f}")
    print(f"p@1: {precision_at_k(records, 1):.4f}")
    print(f"p@5: {precision_at_k(records, 5):.4f}")
    print(f"MRR@{args.mrr_n}: {mrr_at_n(records, args.mrr_n):.4f}")
    return 0


def _read_query_file(path) -> list[BenchQuery]:
    """One query per line; an optional second tab column is a language tag,
    an optional third is the comma-separated gold ids."""
    queries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            text = cols[0]
            lang = cols[1] if len(cols) > 1 and cols[1] else ""
            gold = {int(t) for t in cols[2].split(",") if t} if len(cols) > 2 and cols[2] else set()
            queries.append(BenchQuery(text, gold, lang))
    return queries


def cmd_sweep(args) -> int:
    cfg = _load_app_config(args)
    _require_inputs(args.kb, args.queries, args.gold)
    dictionaries = _load_dictionaries(args.dict)
    kb = KnowledgeBase.load_tsv(args.kb)
    queries = _read_query_file(args.queries)
    gold = load_gold_tsv(args.gold)
    test_queries = []
    for i, q in enumerate(queries):
        if i not in gold:
            raise ConfigError(f"gold file has no row for query index {i}")
        test_queries.append(BenchQuery(q.text, gold[i], q.lang))
    task = SweepTask(kb=kb, dictionaries=dictionaries, policy=cfg.switch_policy(),
                     encoder_config=cfg.encoder_config(),
                     pretrain_config=cfg.train_config("pretrain"),
                     finetune_config=cfg.train_config("finetune") if not args.no_finetune else None,
                     test_queries=test_queries, k=args.k, index_side=cfg.index_side)
    values = [float(v) for v in args.values.split(",")]
    report = sweep(args.param, values, task, seeds=args.seeds)
    print(report.format_text())
    if args.out:
        report.to_csv(args.out)
        print(f"report -> {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    report = encoder_total_loss_check(d_model=args.d_model, n_layers=args.n_layers,
                                      seed=args.seed if args.seed is not None else 0)
    print(f"max relative error: {report.max_rel_err:.3e} (worst: {report.worst_param})")
    if not report.ok(args.tol):
        print(f"FAIL: exceeds tolerance {args.tol:.1e}")
        return 1
    print(f"OK: within tolerance {args.tol:.1e}")
    return 0


def cmd_export_sim(args) -> int:
    _require_inputs(args.ckpt, args.queries, args.labels)
    encoder = load_checkpoint(args.ckpt).encoder
    queries = [q.text for q in _read_query_file(args.queries)]
    labels = [q.text for q in _read_query_file(args.labels)]
    export_sim_matrix(queries, labels, encoder, args.out)
    print(f"{len(queries)}x{len(labels)} similarity matrix -> {args.out}")
    return 0


def cmd_dump_config(args) -> int:
    cfg = _load_app_config(args)
    sys.stdout.write(dump_config(cfg))
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xsr",
                                     description="code-switched cross-lingual semantic retrieval")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="structured-text config file")
        p.add_argument("--seed", type=int, default=None, help="seed override (XSR_SEED wins)")

    p = sub.add_parser("build-cs", help="build a code-switched pair corpus")
    common(p)
    p.add_argument("--pairs", required=True, help="input TSV: query<TAB>label<TAB>lang")
    p.add_argument("--dict", action="append", default=[], help="dictionary TSV (repeatable)")
    p.add_argument("--rate", type=float, default=None, help="replacement probability")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pretrain", help="continual pre-training on a switched corpus")
    common(p)
    p.add_argument("--cs-corpus", required=True, help="five-column switched corpus")
    p.add_argument("--pairs", default=None, help="optional original pairs (adds to vocabulary)")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--log", default=None, help="JSONL loss log")
    p.add_argument("--vocab-out", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("finetune", help="similarity fine-tuning from a checkpoint")
    common(p)
    p.add_argument("--pairs", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--log", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("index", help="encode a knowledge base into an index file")
    p.add_argument("--kb", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--side", choices=("query", "label"), default="query")
    p.add_argument("--out", required=True)

    p = sub.add_parser("retrieve", help="top-k retrieval for a query file")
    p.add_argument("--kb", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--side", choices=("query", "label"), default="query")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="metrics over retrieval output")
    p.add_argument("--results", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--k", type=lambda s: [int(t) for t in s.split(",")], default=[1, 10, 30])
    p.add_argument("--mrr-n", type=int, default=10)

    p = sub.add_parser("sweep", help="re-run the pipeline over parameter values")
    common(p)
    p.add_argument("--param", choices=("lambda", "cmd_rate"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--kb", required=True)
    p.add_argument("--dict", action="append", default=[])
    p.add_argument("--queries", required=True, help="test queries (text[<TAB>lang])")
    p.add_argument("--gold", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--seeds", type=lambda s: [int(t) for t in s.split(",")], default=[0])
    p.add_argument("--no-finetune", action="store_true")
    p.add_argument("--out", default=None)

    p = sub.add_parser("gradcheck", help="finite-difference check of the total objective")
    p.add_argument("--d-model", type=int, default=8)
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("export-sim", help="cosine matrix CSV for a case study")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("dump-config", help="print the effective configuration")
    common(p)

    return parser


_COMMANDS = {
    "build-cs": cmd_build_cs,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "index": cmd_index,
    "retrieve": cmd_retrieve,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "export-sim": cmd_export_sim,
    "dump-config": cmd_dump_config,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except XsrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
