"""Cross-lingual semantic retrieval with code-switched continual pre-training."""

from .codeswitch import (BilingualDictionary, CsPair, SwitchPolicy, build_cs_knowledge,
                         code_switch, corpus_stats, load_dictionary)
from .config import AppConfig, dump_config, load_config
from .checkpoint import load_checkpoint, save_checkpoint
from .encoder import EncoderConfig, SentenceEncoder, init_params
from .errors import XsrError
from .losses import (LossBreakdown, cosine_sim, mlm_loss, sim_loss, tlm_loss, total_loss,
                     xmlm_loss)
from .masking import MaskedView, mask_batch, mask_sequence
from .metrics import EvalRecord, accuracy_at_k, mrr_at_n, precision_at_k, spearman
from .model import CodeSwitchRetriever
from .reporting import SweepReport, SweepTask, export_sim_matrix, sweep
from .retrieval import (Index, KnowledgeBase, RetrievalResult, build_index, retrieve_top_k,
                        run_pipeline)
from .synthetic import SyntheticBenchmark, make_benchmark
from .tensor import GradTape, Tensor, backward
from .text import TokenSeq, Vocabulary, build_vocab, decode, encode, tokenize
from .trainer import (AdamState, Checkpoint, TrainConfig, continual_pretrain, finetune,
                      train_step)

__version__ = "0.1.0"

__all__ = [
    "AppConfig", "AdamState", "BilingualDictionary", "Checkpoint", "CodeSwitchRetriever",
    "CsPair", "EncoderConfig", "EvalRecord", "GradTape", "Index", "KnowledgeBase",
    "LossBreakdown", "MaskedView", "RetrievalResult", "SentenceEncoder", "SweepReport",
    "SweepTask", "SwitchPolicy", "SyntheticBenchmark", "Tensor", "TokenSeq", "TrainConfig",
    "Vocabulary", "XsrError", "accuracy_at_k", "backward", "build_cs_knowledge",
    "build_index", "build_vocab", "code_switch", "continual_pretrain", "corpus_stats",
    "cosine_sim", "decode", "dump_config", "encode", "export_sim_matrix", "finetune",
    "init_params", "load_checkpoint", "load_config", "load_dictionary", "make_benchmark",
    "mask_batch", "mask_sequence", "mlm_loss", "mrr_at_n", "precision_at_k",
    "retrieve_top_k", "run_pipeline", "save_checkpoint", "sim_loss", "spearman", "sweep",
    "tlm_loss", "tokenize", "total_loss", "train_step", "xmlm_loss",
]
