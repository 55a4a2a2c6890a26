"""Run configuration dataclasses, strict JSON loading and config hashing."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..model.train import PretrainSchedule
from ..model.transformer import ModelConfig


class ConfigError(ValueError):
    pass


@dataclass
class Seeds:
    data: int = 0
    model: int = 0
    train: int = 0


@dataclass
class FinetuneSchedule:
    max_epochs: int = 10
    patience: int = 2
    batch: int = 16
    lr: float = 3e-4
    clip: float = 1.0
    valid_fraction: float = 0.10
    encoder_span_positions: int | None = None   # None = every usage-span position


@dataclass
class EvalConfig:
    ks: tuple = (1, 5, 10)
    max_new: int = 32
    batch: int = 64
    max_instances: int | None = None            # cap per test set, first N in file order


@dataclass
class VocabConfig:
    min_freq: int = 2
    max_size: int | None = None


@dataclass
class PretrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: PretrainSchedule = field(default_factory=PretrainSchedule)
    vocab: VocabConfig = field(default_factory=VocabConfig)
    seeds: Seeds = field(default_factory=Seeds)


@dataclass
class RunConfig:
    scenario: str = ""
    strategy: dict = field(default_factory=lambda: {"name": "naive", "params": {}})
    finetune: FinetuneSchedule = field(default_factory=FinetuneSchedule)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seeds: Seeds = field(default_factory=Seeds)
    model: dict = field(default_factory=dict)       # filled from the checkpoint
    out: str = ""


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get((cls.__name__, name))
        if sub is not None:
            kwargs[name] = _build(sub, value, f"{where}.{name}")
        elif name == "ks":
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_NESTED = {
    ("PretrainConfig", "model"): ModelConfig,
    ("PretrainConfig", "schedule"): PretrainSchedule,
    ("PretrainConfig", "vocab"): VocabConfig,
    ("PretrainConfig", "seeds"): Seeds,
    ("RunConfig", "finetune"): FinetuneSchedule,
    ("RunConfig", "eval"): EvalConfig,
    ("RunConfig", "seeds"): Seeds,
}


def env_seed() -> int | None:
    env = os.environ.get("CLFORGE_SEED", "")
    return int(env) if env else None


def seed_override(seeds: Seeds) -> Seeds:
    s = env_seed()
    return seeds if s is None else Seeds(data=s, model=s, train=s)


def load_pretrain_config(path) -> PretrainConfig:
    cfg = _build(PretrainConfig, json.loads(Path(path).read_text()), str(path))
    cfg.seeds = seed_override(cfg.seeds)
    return cfg


def load_run_config(path) -> RunConfig:
    cfg = _build(RunConfig, json.loads(Path(path).read_text()), str(path))
    cfg.seeds = seed_override(cfg.seeds)
    return cfg


def run_config_from_dict(data: dict) -> RunConfig:
    cfg = _build(RunConfig, data, "config")
    cfg.seeds = seed_override(cfg.seeds)
    return cfg


def to_dict(obj) -> dict:
    return dataclasses.asdict(obj)


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(cfg) -> str:
    """SHA-256 of the canonical config JSON; the output location is excluded."""
    data = to_dict(cfg) if dataclasses.is_dataclass(cfg) else dict(cfg)
    data.pop("out", None)
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def eval_threads() -> int:
    try:
        return max(1, int(os.environ.get("CLFORGE_THREADS", "1")))
    except ValueError:
        return 1
