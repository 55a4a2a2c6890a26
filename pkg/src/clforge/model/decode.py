from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import numcore as nc
from .transformer import ModelState, last_position_logits, pad_batch, truncate_prefix
from .vocab import EOS_ID

_GELU_C = np.sqrt(2.0 / np.pi)


def ranked_ids(logits: np.ndarray) -> np.ndarray:
    """Token ids by descending logit; equal logits ordered by ascending id."""
    V = logits.shape[-1]
    return np.lexsort((np.arange(V), -logits))


def next_token_logits(model: ModelState, prefixes: Sequence[Sequence[int]], batch: int = 64) -> np.ndarray:
    L = model.config.max_seq_len
    out = []
    with nc.no_grad():
        for s in range(0, len(prefixes), batch):
            chunk = [truncate_prefix(p, L) for p in prefixes[s:s + batch]]
            out.append(last_position_logits(model, chunk).data)
    return np.concatenate(out) if out else np.zeros((0, model.config.vocab_size))


def next_token_topk(model: ModelState, prefix: Sequence[int], k: int) -> list:
    V = model.config.vocab_size
    if not 1 <= k <= V:
        raise ValueError(f"k must lie in [1, {V}]")
    logits = next_token_logits(model, [prefix])[0]
    order = ranked_ids(logits)[:k]
    z = logits - logits.max()
    probs = np.exp(z) / np.exp(z).sum()
    return [(int(t), float(probs[t])) for t in order]


def topk_batch(model: ModelState, prefixes, k: int, batch: int = 64) -> list:
    logits = next_token_logits(model, prefixes, batch)
    return [ranked_ids(row)[:k].tolist() for row in logits]


def _advance(depth: int, opened: bool, tok: str) -> tuple[int, bool, bool]:
    """Paren balance update; returns (depth, opened, done)."""
    if tok == "(":
        return depth + 1, True, False
    if tok == ")" and opened:
        depth -= 1
        return depth, opened, depth == 0
    return depth, opened, False


def _ln(x, g, b, eps=1e-5):
    xc = x - x.mean(axis=-1, keepdims=True)
    return xc / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps) * g + b


def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * x * (1.0 + 0.044715 * (x * x))))


class KVCache:
    """Incremental causal decoding with cached keys and values (inference only, no dropout).

    Rows may have different lengths; row ``r`` appends at position ``lengths[r]``.
    Valid only while every row stays within ``max_seq_len``.
    """

    def __init__(self, model: ModelState, seqs):
        cfg = model.config
        if cfg.kind != "decoder":
            raise ValueError("key/value caching needs a causal decoder")
        self.cfg = cfg
        self.P = {n: p.data for n, p in model.params.items()}
        ids, lengths = pad_batch(seqs)
        B, T = ids.shape
        L, H, D = cfg.max_seq_len, cfg.heads, cfg.embed_dim
        self.dh = D // H
        self.k = np.zeros((cfg.layers, B, H, L, self.dh))
        self.v = np.zeros((cfg.layers, B, H, L, self.dh))
        self.lengths = lengths.copy()
        x = self.P["tok_emb"][ids] + self.P["pos_emb"][:T]
        keys = np.arange(T)[None, :] < lengths[:, None]
        mask = (keys[:, None, :] & np.tril(np.ones((T, T), dtype=bool))[None])[:, None]
        for i in range(cfg.layers):
            x = self._layer(x, i, mask, slice(0, T))
        h = _ln(x[np.arange(B), lengths - 1], self.P["ln_f.g"], self.P["ln_f.b"])
        self.logits = h @ self.P["tok_emb"].T + self.P["lm_bias"]

    def _layer(self, x, i, mask, span):
        P, H, dh = self.P, self.cfg.heads, self.dh
        p = f"h{i}."
        B, T, D = x.shape
        h = _ln(x, P[p + "ln1.g"], P[p + "ln1.b"])
        qkv = (h @ P[p + "attn.wqkv"] + P[p + "attn.bqkv"]).reshape(B, T, 3, H, dh).transpose(2, 0, 3, 1, 4)
        q = qkv[0]
        if isinstance(span, slice):
            self.k[i, :, :, span] = qkv[1]
            self.v[i, :, :, span] = qkv[2]
            k, v = self.k[i, :, :, span], self.v[i, :, :, span]
        else:
            rows = np.arange(B)
            self.k[i, rows, :, span] = qkv[1][:, :, 0]
            self.v[i, rows, :, span] = qkv[2][:, :, 0]
            top = int(span.max()) + 1
            k, v = self.k[i, :, :, :top], self.v[i, :, :, :top]
        s = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
        s = np.where(mask, s, -np.inf)
        e = np.exp(s - s.max(axis=-1, keepdims=True))
        att = e / e.sum(axis=-1, keepdims=True)
        y = (att @ v).transpose(0, 2, 1, 3).reshape(B, T, D)
        x = x + y @ P[p + "attn.wo"] + P[p + "attn.bo"]
        h = _ln(x, P[p + "ln2.g"], P[p + "ln2.b"])
        return x + _gelu(h @ P[p + "mlp.w1"] + P[p + "mlp.b1"]) @ P[p + "mlp.w2"] + P[p + "mlp.b2"]

    def step(self, tokens, live=None) -> np.ndarray:
        """Append one token per live row; returns next-token logits (B, V).

        Rows outside ``live`` do not advance and their logits are meaningless.
        """
        live = np.ones(len(self.lengths), dtype=bool) if live is None else np.asarray(live)
        if (self.lengths[live] >= self.cfg.max_seq_len).any():
            raise ValueError("KVCache row would exceed max_seq_len")
        pos = np.where(live, self.lengths, np.minimum(self.lengths, self.cfg.max_seq_len - 1))
        x = (self.P["tok_emb"][np.asarray(tokens)] + self.P["pos_emb"][pos])[:, None, :]
        top = int(pos.max()) + 1
        mask = (np.arange(top)[None, :] <= pos[:, None])[:, None, None, :]
        for i in range(self.cfg.layers):
            x = self._layer(x, i, mask, pos)
        self.lengths = np.where(live, pos + 1, self.lengths)
        h = _ln(x[:, 0], self.P["ln_f.g"], self.P["ln_f.b"])
        self.logits = h @ self.P["tok_emb"].T + self.P["lm_bias"]
        return self.logits


def _greedy_cached(model: ModelState, seqs, itos, max_new: int) -> list:
    """Cached greedy decoding; rows that run out of context are finished by full recomputation."""
    L = model.config.max_seq_len
    cache = KVCache(model, [truncate_prefix(s, L) for s in seqs])
    gen = [[] for _ in seqs]
    state = [(0, False) for _ in seqs]
    live = np.ones(len(seqs), dtype=bool)
    overflow = []
    logits = cache.logits
    for _ in range(max_new):
        nxt = np.array([int(ranked_ids(row)[0]) for row in logits])
        for r in np.flatnonzero(live):
            tok_id = int(nxt[r])
            if tok_id == EOS_ID:
                live[r] = False
                continue
            gen[r].append(tok_id)
            depth, opened, done = _advance(*state[r], itos[tok_id])
            state[r] = (depth, opened)
            if done or len(gen[r]) == max_new:
                live[r] = False
        # rows whose context is full leave the cached path
        for r in np.flatnonzero(live & (cache.lengths >= L)):
            live[r] = False
            overflow.append(int(r))
        if not live.any():
            break
        logits = cache.step(np.where(live, nxt, 0), live)
    for r in overflow:
        gen[r] = _greedy_full(model, [seqs[r]], itos, max_new, [gen[r]], [state[r]])[0]
    return gen


def _greedy_full(model: ModelState, seqs, itos, max_new: int, gen=None, state=None) -> list:
    L = model.config.max_seq_len
    gen = gen if gen is not None else [[] for _ in seqs]
    state = state if state is not None else [(0, False) for _ in seqs]
    active = [r for r in range(len(seqs)) if len(gen[r]) < max_new]
    with nc.no_grad():
        while active:
            chunk = [truncate_prefix(seqs[r] + gen[r], L) for r in active]
            logits = last_position_logits(model, chunk).data
            still = []
            for row, r in enumerate(active):
                tok_id = int(ranked_ids(logits[row])[0])
                if tok_id == EOS_ID:
                    continue
                gen[r].append(tok_id)
                depth, opened, done = _advance(*state[r], itos[tok_id])
                state[r] = (depth, opened)
                if not done and len(gen[r]) < max_new:
                    still.append(r)
            active = still
    return gen


def generate_usage_batch(model: ModelState, prefixes, itos, max_new: int = 32, batch: int = 64,
                         cache: bool = True) -> list:
    """Greedy continuation of each prefix until the usage's first '(' is balanced, EOS, or ``max_new``.

    Prefixes are processed in length order to limit padding; results come back in input order.
    """
    order = sorted(range(len(prefixes)), key=lambda r: (len(prefixes[r]), r))
    results: list = [None] * len(prefixes)
    use_cache = cache and model.config.kind == "decoder"
    for s in range(0, len(order), batch):
        idx = order[s:s + batch]
        seqs = [list(prefixes[r]) for r in idx]
        gen = _greedy_cached(model, seqs, itos, max_new) if use_cache else _greedy_full(model, seqs, itos, max_new)
        for r, g in zip(idx, gen):
            results[r] = g
    return results


def generate_usage(model: ModelState, prefix, itos, max_new: int = 32) -> list:
    return generate_usage_batch(model, [prefix], itos, max_new)[0]
