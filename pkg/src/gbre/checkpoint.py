"""Versioned JSON checkpoints of all named parameters, config and vocabulary.

Arrays are stored as base64 of little-endian float64 bytes, so a reload
reproduces every value bit for bit and identical runs give identical files.
"""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .corpus import EmbeddingTable, RelationSchema, Vocabulary
from .model import ModelParams, init_params

FORMAT = "gbre-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def vocab_hash(vocab: Vocabulary) -> str:
    return hashlib.sha256("\n".join(vocab.id2word).encode("utf-8")).hexdigest()


def _encode(arr: np.ndarray) -> dict:
    a = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(a.shape), "dtype": "float64", "data": base64.b64encode(a.tobytes()).decode()}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(np.float64)


def save(path, params: ModelParams, config: TrainConfig, vocab: Vocabulary,
         schema: RelationSchema, extra: dict | None = None):
    payload = {
        "format": FORMAT,
        "version": VERSION,
        "config": config.to_dict(),
        "relations": schema.names(),
        "na": schema.na_name,
        "vocab": vocab.id2word[2:],
        "lowercase": vocab.lowercase,
        "vocab_hash": vocab_hash(vocab),
        "params": {name: _encode(p.data) for name, p in params.items()},
        "trainable": {name: p.trainable for name, p in params.items()},
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load(path):
    """Return (params, config, vocab, schema, extra)."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if payload.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} file")
    if payload.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')}")
    config = TrainConfig.from_dict(payload["config"])
    vocab = Vocabulary(payload["vocab"], lowercase=payload.get("lowercase", True))
    if vocab_hash(vocab) != payload["vocab_hash"]:
        raise CheckpointError("vocabulary hash mismatch")
    schema = RelationSchema({n: i for i, n in enumerate(payload["relations"])}, na=payload["na"])
    arrays = {k: _decode(v) for k, v in payload["params"].items()}
    emb = EmbeddingTable(vocab, arrays["word_emb"])
    params = init_params(config, emb, len(schema))
    if set(params.names()) != set(arrays):
        raise CheckpointError(f"parameter names differ: {sorted(set(params.names()) ^ set(arrays))}")
    params.load_state(arrays)
    for name, flag in payload.get("trainable", {}).items():
        params[name].trainable = flag
    return params, config, vocab, schema, payload.get("extra", {})
