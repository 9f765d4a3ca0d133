"""Portable checkpoint files.

Layout: one UTF-8 JSON header line (format version, encoder config, train
config, vocabulary, rng state, array manifest) followed by the raw
little-endian IEEE-754 float32 array payloads in manifest order. Weights
are stored at 32-bit precision, so save -> load -> save is byte-stable but
a freshly trained float64 model loses the low mantissa bits on first save.
"""

from __future__ import annotations

import json
from typing import Optional

import numpy as np

from .encoder import EncoderConfig, SentenceEncoder, param_shapes
from .errors import CheckpointError
from .text import NUM_SPECIALS, SPECIAL_TOKENS, Vocabulary
from .trainer import AdamState, Checkpoint, TrainConfig

FORMAT_NAME = "xsr-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    arrays: list[tuple[str, np.ndarray]] = []
    for name in sorted(ckpt.encoder.params):
        arrays.append((f"param/{name}", ckpt.encoder.params[name]))
    if ckpt.adam is not None:
        for name in sorted(ckpt.adam.m):
            arrays.append((f"adam.m/{name}", ckpt.adam.m[name]))
        for name in sorted(ckpt.adam.v):
            arrays.append((f"adam.v/{name}", ckpt.adam.v[name]))
    header = {
        "format": FORMAT_NAME,
        "version": ckpt.version,
        "encoder": ckpt.encoder.config.as_dict(),
        "train": ckpt.train_config.as_dict(),
        "vocab": ckpt.encoder.vocab.id_to_token[NUM_SPECIALS:],
        "rng_state": ckpt.rng_state,
        "adam_t": ckpt.adam.t if ckpt.adam is not None else None,
        "arrays": [{"name": n, "shape": list(a.shape), "dtype": "<f4"} for n, a in arrays],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, expected_config: Optional[EncoderConfig] = None) -> Checkpoint:
    """Read a checkpoint; verifies format version, payload size, and array
    shapes against the stored configuration (and ``expected_config`` if
    given)."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint header") from exc
    if header.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {header.get('version')} (expected {FORMAT_VERSION})")

    config = EncoderConfig(**header["encoder"])
    if expected_config is not None and config.as_dict() != expected_config.as_dict():
        raise CheckpointError(f"{path}: checkpoint configuration does not match the expected one")
    train_config = TrainConfig(**header["train"])
    vocab = Vocabulary(list(SPECIAL_TOKENS) + list(header["vocab"]))

    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        chunk = payload[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated checkpoint (array {spec['name']})")
        arrays[spec["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError(f"{path}: trailing bytes after declared arrays")

    params = {}
    expected_shapes = param_shapes(config)
    for name, shape in expected_shapes.items():
        key = f"param/{name}"
        if key not in arrays:
            raise CheckpointError(f"{path}: missing parameter {name}")
        if arrays[key].shape != shape:
            raise CheckpointError(
                f"{path}: parameter {name} has shape {arrays[key].shape}, config requires {shape}")
        params[name] = arrays[key]
    encoder = SentenceEncoder(config, params, vocab)

    adam = None
    if header.get("adam_t") is not None:
        adam = AdamState(params)
        adam.t = int(header["adam_t"])
        for name in params:
            mk, vk = f"adam.m/{name}", f"adam.v/{name}"
            if mk not in arrays or vk not in arrays:
                raise CheckpointError(f"{path}: missing optimizer state for {name}")
            adam.m[name] = arrays[mk]
            adam.v[name] = arrays[vk]
    return Checkpoint(encoder=encoder, train_config=train_config, adam=adam,
                      rng_state=header.get("rng_state"), version=FORMAT_VERSION)
