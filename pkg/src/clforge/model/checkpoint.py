"""Checkpoint format: b"CLF1", u32-LE metadata length, UTF-8 JSON metadata, raw f64-LE buffers."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..numcore import Tensor
from .transformer import ModelConfig, ModelState, param_groups
from .vocab import Vocab

MAGIC = b"CLF1"


def save_checkpoint(path, model: ModelState, vocab: Vocab | None = None, seed: int = 0, step: int = 0,
                    extra: dict | None = None) -> None:
    manifest = []
    offset = 0
    for name in model.names():
        p = model.params[name]
        manifest.append({"name": name, "shape": list(p.shape), "offset": offset})
        offset += p.size * 8
    groups = param_groups(model.config)
    meta = {
        "config": model.config.to_dict(),
        "params": manifest,
        "groups": {k: v for k, v in groups.items() if v != "pretrained"},
        "seed": seed,
        "step": step,
        "vocab": None if vocab is None else vocab.itos,
        "extra": extra or {},
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in model.names():
            fh.write(np.ascontiguousarray(model.params[name].data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelState, Vocab | None, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a CLF1 checkpoint")
    (n,) = struct.unpack("<I", raw[4:8])
    meta = json.loads(raw[8:8 + n].decode("utf-8"))
    base = 8 + n
    config = ModelConfig(**meta["config"])
    params = {}
    for entry in meta["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = base + entry["offset"]
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=start).astype(np.float64).reshape(shape)
        params[entry["name"]] = Tensor(arr, requires_grad=True, name=entry["name"])
    itos = meta.get("vocab")
    vocab = None if itos is None else Vocab(itos[5:])
    return ModelState(config, params), vocab, meta
