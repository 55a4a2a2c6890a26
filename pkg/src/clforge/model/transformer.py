"""Tiny pre-LN transformers: a causal decoder and a bidirectional encoder."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import numcore as nc
from ..numcore import Tensor
from .vocab import BOS_ID, MASK_ID, PAD_ID

ADDED_AT_FINETUNING = "added-at-fine-tuning"


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "decoder"
    vocab_size: int = 512
    layers: int = 2
    heads: int = 4
    embed_dim: int = 128
    ff_dim: int = 512
    max_seq_len: int = 256
    dropout: float = 0.0

    def __post_init__(self):
        if self.kind not in ("decoder", "encoder"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        for name in ("vocab_size", "layers", "heads", "embed_dim", "ff_dim", "max_seq_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    d, f, v = cfg.embed_dim, cfg.ff_dim, cfg.vocab_size
    shapes = {"tok_emb": (v, d), "pos_emb": (cfg.max_seq_len, d), "ln_f.g": (d,), "ln_f.b": (d,)}
    for i in range(cfg.layers):
        p = f"h{i}."
        shapes.update({
            p + "ln1.g": (d,), p + "ln1.b": (d,),
            p + "attn.wqkv": (d, 3 * d), p + "attn.bqkv": (3 * d,),
            p + "attn.wo": (d, d), p + "attn.bo": (d,),
            p + "ln2.g": (d,), p + "ln2.b": (d,),
            p + "mlp.w1": (d, f), p + "mlp.b1": (f,),
            p + "mlp.w2": (f, d), p + "mlp.b2": (d,),
        })
    if cfg.kind == "decoder":
        shapes["lm_bias"] = (v,)
    else:
        shapes.update({
            "mlm.dense.w": (d, d), "mlm.dense.b": (d,),
            "mlm.ln.g": (d,), "mlm.ln.b": (d,), "mlm.bias": (v,),
            "lm_head.w": (d, v), "lm_head.b": (v,),
        })
    return dict(sorted(shapes.items()))


def param_groups(cfg: ModelConfig) -> dict[str, str]:
    return {n: (ADDED_AT_FINETUNING if n.startswith("lm_head.") else "pretrained")
            for n in param_shapes(cfg)}


def _init_value(name: str, shape: tuple, rng: np.random.Generator) -> np.ndarray:
    leaf = name.rsplit(".", 1)[-1]
    if leaf == "g":
        return np.ones(shape)
    if leaf.startswith("b") or name in ("lm_bias", "mlm.bias", "lm_head.b"):
        return np.zeros(shape)
    return rng.normal(0.0, 0.02, size=shape)


@dataclass
class ModelState:
    config: ModelConfig
    params: dict = field(default_factory=dict)

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "ModelState":
        rng = nc.Rng(seed).gen
        params = {n: Tensor(_init_value(n, s, rng), requires_grad=True, name=n)
                  for n, s in param_shapes(config).items()}
        return cls(config, params)

    def reinit_lm_head(self, seed: int) -> None:
        """Fresh random LM head for an encoder entering fine-tuning."""
        if self.config.kind != "encoder":
            return
        rng = nc.Rng(seed, (7,)).gen
        for n in ("lm_head.b", "lm_head.w"):
            self.params[n].data = _init_value(n, self.params[n].shape, rng)

    def names(self) -> list[str]:
        return sorted(self.params)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[n].data.reshape(-1) for n in self.names()])

    def set_flat(self, theta: np.ndarray) -> None:
        off = 0
        for n in self.names():
            p = self.params[n]
            p.data = np.array(theta[off:off + p.size]).reshape(p.shape)
            off += p.size
        if off != theta.size:
            raise ValueError("flat vector length does not match parameters")

    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def snapshot(self) -> dict:
        return {n: p.data.copy() for n, p in self.params.items()}

    def restore(self, snap: dict) -> None:
        for n, arr in snap.items():
            self.params[n].data = arr.copy()

    def copy(self) -> "ModelState":
        return ModelState(self.config, {n: Tensor(p.data.copy(), requires_grad=True, name=n)
                                        for n, p in self.params.items()})


# ---------------------------------------------------------------- masks

def attention_mask(kind: str, lengths: np.ndarray, T: int) -> np.ndarray:
    """Boolean (B, 1, T, T) mask: True where query row may attend to key column."""
    lengths = np.asarray(lengths)
    keys = np.arange(T)[None, :] < lengths[:, None]              # (B, T)
    mask = np.broadcast_to(keys[:, None, :], (len(lengths), T, T))
    if kind == "decoder":
        mask = mask & np.tril(np.ones((T, T), dtype=bool))[None]
    return mask[:, None, :, :].copy()


# ---------------------------------------------------------------- forward

def _block(x: Tensor, P: dict, i: int, cfg: ModelConfig, mask: np.ndarray, rng) -> Tensor:
    p = f"h{i}."
    B, T, D = x.shape
    H = cfg.heads
    dh = D // H
    h = nc.layer_norm(x, P[p + "ln1.g"], P[p + "ln1.b"])
    qkv = h @ P[p + "attn.wqkv"] + P[p + "attn.bqkv"]
    qkv = qkv.reshape(B, T, 3, H, dh).transpose(2, 0, 3, 1, 4)    # (3, B, H, T, dh)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dh))
    att = nc.softmax(scores, mask)
    att = nc.dropout(att, cfg.dropout, rng)
    y = (att @ v).transpose(0, 2, 1, 3).reshape(B, T, D)
    x = x + nc.dropout(y @ P[p + "attn.wo"] + P[p + "attn.bo"], cfg.dropout, rng)
    h = nc.layer_norm(x, P[p + "ln2.g"], P[p + "ln2.b"])
    h = nc.gelu(h @ P[p + "mlp.w1"] + P[p + "mlp.b1"]) @ P[p + "mlp.w2"] + P[p + "mlp.b2"]
    return x + nc.dropout(h, cfg.dropout, rng)


def hidden_states(model: ModelState, ids: np.ndarray, lengths: np.ndarray, rng=None) -> Tensor:
    """Final-layer representations, (B, T, D)."""
    cfg = model.config
    P = model.params
    ids = np.asarray(ids, dtype=np.int64)
    B, T = ids.shape
    if T > cfg.max_seq_len:
        raise ValueError(f"sequence length {T} exceeds max_seq_len {cfg.max_seq_len}")
    x = nc.embedding(P["tok_emb"], ids) + P["pos_emb"][:T]
    x = nc.dropout(x, cfg.dropout, rng)
    mask = attention_mask(cfg.kind, lengths, T)
    for i in range(cfg.layers):
        x = _block(x, P, i, cfg, mask, rng)
    return nc.layer_norm(x, P["ln_f.g"], P["ln_f.b"])


def decoder_logits(model: ModelState, h: Tensor) -> Tensor:
    P = model.params
    return h @ P["tok_emb"].transpose(1, 0) + P["lm_bias"]


def mlm_logits(model: ModelState, h: Tensor) -> Tensor:
    P = model.params
    z = nc.gelu(h @ P["mlm.dense.w"] + P["mlm.dense.b"])
    z = nc.layer_norm(z, P["mlm.ln.g"], P["mlm.ln.b"])
    return z @ P["tok_emb"].transpose(1, 0) + P["mlm.bias"]


def lm_head_logits(model: ModelState, h: Tensor) -> Tensor:
    P = model.params
    return h @ P["lm_head.w"] + P["lm_head.b"]


def pad_batch(seqs, pad: int = PAD_ID) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    T = int(lengths.max())
    ids = np.full((len(seqs), T), pad, dtype=np.int64)
    for r, s in enumerate(seqs):
        ids[r, :len(s)] = s
    return ids, lengths


def last_position_logits(model: ModelState, prefixes, rng=None) -> Tensor:
    """Next-token logits (B, V) after each prefix (prefixes already fit max_seq_len)."""
    ids, lengths = pad_batch(prefixes)
    h = hidden_states(model, ids, lengths, rng)
    B = len(prefixes)
    last = h[np.arange(B), lengths - 1]                      # (B, D)
    if model.config.kind == "decoder":
        return decoder_logits(model, last)
    return lm_head_logits(model, last)


def truncate_prefix(prefix, max_len: int) -> list[int]:
    """``[BOS] + prefix`` keeping the most recent ``max_len`` tokens."""
    seq = [BOS_ID] + list(prefix)
    return seq[-max_len:] if len(seq) > max_len else seq


# ---------------------------------------------------------------- objectives

def causal_lm_loss(model: ModelState, seqs, rng=None) -> Tensor:
    """Mean next-token NLL over the real positions of each sequence."""
    ids, lengths = pad_batch(seqs)
    B, T = ids.shape
    h = hidden_states(model, ids[:, :-1], lengths - 1, rng)
    logits = decoder_logits(model, h).reshape(B * (T - 1), -1)
    targets = ids[:, 1:].reshape(-1)
    w = (np.arange(T - 1)[None, :] < (lengths - 1)[:, None]).reshape(-1).astype(np.float64)
    return nc.cross_entropy(logits, targets, w)


def mlm_corrupt(seqs, vocab_size: int, rng: np.random.Generator, rate: float = 0.15):
    """80/10/10 corruption of ``rate`` of the non-special positions.

    Returns (corrupted ids, lengths, row idx, col idx, original targets).
    """
    ids, lengths = pad_batch(seqs)
    B, T = ids.shape
    valid = (np.arange(T)[None, :] < lengths[:, None]) & (ids >= 5)
    pick = valid & (rng.random((B, T)) < rate)
    for r in range(B):
        if not pick[r].any() and valid[r].any():
            cols = np.flatnonzero(valid[r])
            pick[r, cols[rng.integers(len(cols))]] = True
    rows, cols = np.nonzero(pick)
    targets = ids[rows, cols].copy()
    u = rng.random(len(rows))
    corrupted = ids.copy()
    corrupted[rows[u < 0.8], cols[u < 0.8]] = MASK_ID
    rnd = (u >= 0.8) & (u < 0.9)
    corrupted[rows[rnd], cols[rnd]] = rng.integers(5, vocab_size, size=int(rnd.sum()))
    return corrupted, lengths, rows, cols, targets


def mlm_loss(model: ModelState, seqs, rng: np.random.Generator, dropout_rng=None) -> Tensor:
    ids, lengths, rows, cols, targets = mlm_corrupt(seqs, model.config.vocab_size, rng)
    h = hidden_states(model, ids, lengths, dropout_rng)
    return nc.cross_entropy(mlm_logits(model, h[rows, cols]), targets)


def next_token_loss(model: ModelState, prefixes, targets, rng=None) -> Tensor:
    """Loss of predicting ``targets`` from the final position of each prefix."""
    return nc.cross_entropy(last_position_logits(model, prefixes, rng), np.asarray(targets))
