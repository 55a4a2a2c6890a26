"""Objectives and the pre-training loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .. import numcore as nc
from .transformer import (ModelConfig, ModelState, causal_lm_loss, mlm_loss, next_token_loss,
                          truncate_prefix)
from .vocab import BOS_ID, EOS_ID, Vocab

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class PretrainSchedule:
    max_steps: int = 2000
    batch: int = 16
    eval_every: int = 200
    lr: float = 1e-3
    clip: float = 1.0
    max_valid: int = 512


def method_sequence(ids, max_len: int) -> list:
    """``[BOS] + ids + [EOS]`` cut to ``max_len`` from the left edge of the method."""
    return ([BOS_ID] + list(ids) + [EOS_ID])[:max_len]


class CausalObjective:
    """Whole-method next-token prediction (decoder)."""

    def __init__(self, max_len: int):
        self.max_len = max_len

    def examples(self, encoded_methods, rng=None) -> list:
        return [method_sequence(ids, self.max_len) for ids in encoded_methods]

    def loss(self, model, batch, rng=None):
        return causal_lm_loss(model, batch)


class MaskedObjective:
    """MLM pre-training of the encoder; corruption drawn from ``rng``."""

    def __init__(self, max_len: int):
        self.max_len = max_len

    def examples(self, encoded_methods, rng=None) -> list:
        return [([BOS_ID] + list(ids))[:self.max_len] for ids in encoded_methods]

    def loss(self, model, batch, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        return mlm_loss(model, batch, rng)


class SpanObjective:
    """Next-token prediction from the final position of a prefix (encoder fine-tuning).

    One example per token of every API usage span: the prefix up to that
    token and the token itself. ``per_site`` caps how many span positions per
    site are used, chosen by ``rng`` (``None`` = all).
    """

    def __init__(self, max_len: int, per_site: int | None = None):
        self.max_len = max_len
        self.per_site = per_site

    def examples_from_samples(self, samples, vocab: Vocab, rng=None) -> list:
        out = []
        for s in samples:
            ids = vocab.encode(s.tokens)
            for site in s.sites:
                positions = list(range(site.start, site.end))
                if self.per_site is not None and len(positions) > self.per_site:
                    keep = sorted(rng.choice(len(positions), size=self.per_site, replace=False).tolist())
                    positions = [positions[k] for k in keep]
                for p in positions:
                    out.append((truncate_prefix(ids[:p], self.max_len), ids[p]))
        return out

    def loss(self, model, batch, rng=None):
        return next_token_loss(model, [b[0] for b in batch], [b[1] for b in batch])


def grads_of(model: ModelState, loss) -> dict:
    params = [model.params[n] for n in model.names()]
    g = nc.backward(loss, params)
    return {n: g[model.params[n]] for n in model.names()}


def flatten(model: ModelState, grads: dict) -> np.ndarray:
    return np.concatenate([grads[n].reshape(-1) for n in model.names()])


def unflatten(model: ModelState, vec: np.ndarray) -> dict:
    out, off = {}, 0
    for n in model.names():
        p = model.params[n]
        out[n] = vec[off:off + p.size].reshape(p.shape)
        off += p.size
    return out


def mean_loss(model: ModelState, objective, examples, batch: int, rng_seed: int = 0) -> float:
    """Example-weighted mean loss without recording gradients (fixed corruption seed)."""
    if not examples:
        return float("nan")
    total = 0.0
    rng = np.random.default_rng(rng_seed)
    with nc.no_grad():
        for s in range(0, len(examples), batch):
            chunk = examples[s:s + batch]
            total += objective.loss(model, chunk, rng).item() * len(chunk)
    return total / len(examples)


def pretrain(config: ModelConfig, train_ids, valid_ids, schedule: PretrainSchedule, seed: int = 0,
             progress=None) -> tuple[ModelState, dict]:
    """Train from random init; keep the checkpoint with minimal validation loss."""
    if not valid_ids:
        raise ValueError("pre-training needs a non-empty validation split")
    model = ModelState.init(config, seed)
    objective = (CausalObjective if config.kind == "decoder" else MaskedObjective)(config.max_seq_len)
    train = objective.examples(train_ids)
    valid = objective.examples(valid_ids[:schedule.max_valid])
    root = nc.Rng(seed, (3,))
    opt = nc.OptimizerState(lr=schedule.lr)
    best = (mean_loss(model, objective, valid, 64), model.snapshot(), 0)
    history = [{"step": 0, "valid_loss": best[0]}]
    order = root.child(0).permutation(len(train))
    epoch, pos = 0, 0
    for step in range(1, schedule.max_steps + 1):
        if pos + schedule.batch > len(order):
            epoch += 1
            order = root.child(epoch).permutation(len(train))
            pos = 0
        idx = order[pos:pos + schedule.batch]
        pos += schedule.batch
        batch = [train[i] for i in idx]
        loss = objective.loss(model, batch, root.child(10_000 + step).gen)
        value = loss.item()
        if not math.isfinite(value):
            nc.current_tape().clear()
            raise TrainingError(f"pre-training diverged at step {step} (loss={value})")
        grads, _ = nc.clip_grad_norm(grads_of(model, loss), schedule.clip)
        nc.adam_step(model.params, grads, opt)
        if step % schedule.eval_every == 0 or step == schedule.max_steps:
            vl = mean_loss(model, objective, valid, 64)
            history.append({"step": step, "train_loss": value, "valid_loss": vl})
            log.info("pretrain step %d train %.4f valid %.4f", step, value, vl)
            if progress:
                progress(step, value, vl)
            if vl < best[0]:
                best = (vl, model.snapshot(), step)
    model.restore(best[1])
    return model, {"best_step": best[2], "best_valid_loss": best[0], "history": history}
