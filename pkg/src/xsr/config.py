"""Structured-text application configuration.

The file format is one ``key: value`` pair per line; ``#`` starts a
comment, blank lines are ignored, list values are comma-separated.
Unknown keys are rejected and missing keys fall back to the documented
defaults, so an empty file is a valid (all-defaults) configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any

from .codeswitch import SwitchPolicy
from .encoder import EncoderConfig
from .errors import ConfigError
from .trainer import TrainConfig


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"config key {key}: expected a boolean, got {raw!r}")


def _parse_str_list(raw: str, key: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


@dataclass
class AppConfig:
    """Merged encoder, trainer, and switch-policy settings plus paths."""

    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 64
    vocab_size: int = 4096
    dropout: float = 0.1
    script_mode: str = "whitespace"

    learning_rate: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    pretrain_steps: int = 2000
    finetune_steps: int = 500
    lam: float = 0.2
    mask_prob: float = 0.15
    margin: float = 0.0
    use_sim_loss: bool = True
    sim_on_clean: bool = False
    joint_finetune: bool = False

    cmd_rate: float = 0.10
    target_choice: str = "first"
    skip_languages: list[str] = field(default_factory=lambda: ["en"])
    per_token_language: bool = False
    same_language_per_pair: bool = True

    seed: int = 0
    index_side: str = "query"

    pairs_path: str = ""
    dict_paths: list[str] = field(default_factory=list)
    kb_path: str = ""
    queries_path: str = ""
    gold_path: str = ""
    checkpoint_path: str = ""
    output_path: str = ""

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(d_model=self.d_model, n_layers=self.n_layers, n_heads=self.n_heads,
                             d_ff=self.d_ff, max_len=self.max_len, vocab_size=self.vocab_size,
                             dropout=self.dropout, script_mode=self.script_mode)

    def train_config(self, mode: str) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, beta1=self.adam_beta1, beta2=self.adam_beta2,
            adam_eps=self.adam_eps, batch_size=self.batch_size,
            steps=self.pretrain_steps if mode == "pretrain" else self.finetune_steps,
            lam=self.lam, mask_prob=self.mask_prob, cmd_rate=self.cmd_rate, seed=self.seed,
            mode=mode, margin=self.margin, use_sim_loss=self.use_sim_loss,
            sim_on_clean=self.sim_on_clean, joint_finetune=self.joint_finetune)

    def switch_policy(self) -> SwitchPolicy:
        return SwitchPolicy(rate=self.cmd_rate, seed=self.seed, target_choice=self.target_choice,
                            skip_languages=frozenset(self.skip_languages),
                            per_token_language=self.per_token_language,
                            same_language_per_pair=self.same_language_per_pair)

    def validate(self) -> "AppConfig":
        self.encoder_config()
        self.train_config("pretrain")
        self.switch_policy()
        if self.index_side not in ("query", "label"):
            raise ConfigError(f"config key index_side: must be 'query' or 'label', got {self.index_side!r}")
        return self


# File key -> (attribute, parser); "lambda" is a reserved word in Python so
# it maps onto the ``lam`` attribute.
_FIELD_TYPES = {f.name: f.type for f in fields(AppConfig)}
_KEY_TO_ATTR = {("lambda" if f.name == "lam" else f.name): f.name for f in fields(AppConfig)}


def _parse_value(key: str, attr: str, raw: str) -> Any:
    ftype = _FIELD_TYPES[attr]
    raw = raw.strip()
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "bool":
            return _parse_bool(raw, key)
        if ftype.startswith("list"):
            return _parse_str_list(raw, key)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key}: cannot parse {raw!r} as {ftype}") from exc


def parse_config_text(text: str, source: str = "<config>") -> AppConfig:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected 'key: value'")
        key, _, rest = line.partition(":")
        key = key.strip()
        if key not in _KEY_TO_ATTR:
            raise ConfigError(f"{source}: line {lineno}: unknown config key {key!r}")
        attr = _KEY_TO_ATTR[key]
        if attr in values:
            raise ConfigError(f"{source}: line {lineno}: duplicate config key {key!r}")
        values[attr] = _parse_value(key, attr, rest)
    try:
        return AppConfig(**values).validate()
    except ConfigError:
        raise
    except Exception as exc:  # invariant violations from component configs
        raise ConfigError(str(exc)) from exc


def load_config(path) -> AppConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def dump_config(cfg: AppConfig) -> str:
    """Render every key (defaults included); load(dump(c)) == c."""
    lines = []
    for key in sorted(_KEY_TO_ATTR):
        attr = _KEY_TO_ATTR[key]
        value = getattr(cfg, attr)
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, list):
            rendered = ",".join(value)
        else:
            rendered = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{key}: {rendered}")
    return "\n".join(lines) + "\n"
