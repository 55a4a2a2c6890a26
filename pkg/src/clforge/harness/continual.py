"""Sequential fine-tuning over the OOD experiences with a pluggable strategy."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .. import numcore as nc
from ..corpus.pipeline import carve_validation
from ..metrics import EvalMatrix, OBSERVED, summarize
from ..model.train import (CausalObjective, SpanObjective, TrainingError, flatten, grads_of, mean_loss,
                           unflatten)
from ..strategies import Strategy
from .config import EvalConfig, FinetuneSchedule, Seeds
from .evaluate import CALL_METRICS, USAGE_METRICS, evaluate_all
from .tasks import API_CALL, API_USAGE

log = logging.getLogger(__name__)

METRIC_TASK = {**{m: API_CALL for m in CALL_METRICS}, **{m: API_USAGE for m in USAGE_METRICS}}


@dataclass
class ContinualResult:
    domains: list
    matrices: dict                      # metric name -> EvalMatrix
    log: list = field(default_factory=list)
    strategy: dict = field(default_factory=dict)

    def summary(self, divisor_mode: str = OBSERVED) -> dict:
        out = {}
        for name, m in self.matrices.items():
            A, F = summarize(m, self.domains, divisor_mode)
            out[name] = {"A": A, "F": F}
        return out


class _Fitter:
    """Wraps the objective so the loop does not care which architecture it trains."""

    def __init__(self, model, vocab, schedule: FinetuneSchedule):
        self.model, self.vocab = model, vocab
        self.kind = model.config.kind
        if self.kind == "decoder":
            self.objective = CausalObjective(model.config.max_seq_len)
        else:
            self.objective = SpanObjective(model.config.max_seq_len, schedule.encoder_span_positions)

    def examples(self, samples, rng=None) -> list:
        if self.kind == "decoder":
            return self.objective.examples([self.vocab.encode(s.tokens) for s in samples])
        return self.objective.examples_from_samples(samples, self.vocab, rng)

    def loss(self, batch):
        return self.objective.loss(self.model, batch)

    def valid_loss(self, examples, batch: int) -> float:
        return mean_loss(self.model, self.objective, examples, batch)

    def sample_grad(self, sample) -> np.ndarray:
        """Flat gradient of the task loss on one method (used for the Fisher)."""
        exs = self.examples([sample], np.random.default_rng(0))
        if not exs:
            return np.zeros(self.model.num_params())
        return flatten(self.model, grads_of(self.model, self.loss(exs)))


def _train_experience(fitter: _Fitter, strategy: Strategy, train_ex: list, valid_ex: list,
                      schedule: FinetuneSchedule, rng: nc.Rng, exp: int) -> dict:
    model = fitter.model
    opt = nc.OptimizerState(lr=schedule.lr)
    best_loss, best_snap, best_epoch = math.inf, None, 0
    history, stale, steps = [], 0, 0
    use_flat = strategy.has_penalty or strategy.tracks_steps
    for epoch in range(1, schedule.max_epochs + 1):
        order = rng.child(epoch).permutation(len(train_ex))
        for s in range(0, len(order), schedule.batch):
            batch = [train_ex[i] for i in order[s:s + schedule.batch]]
            loss = fitter.loss(batch)
            value = loss.item()
            if not math.isfinite(value):
                nc.current_tape().clear()
                raise TrainingError(f"fine-tuning diverged on experience {exp}, epoch {epoch} (loss={value})")
            task_grads = grads_of(model, loss)
            grads = task_grads
            if use_flat:
                theta_before = model.flat()
                task_flat = flatten(model, task_grads)
                if strategy.has_penalty:
                    _, pg = strategy.penalty(theta_before)
                    if pg is not None:
                        grads = unflatten(model, task_flat + pg)
            grads, _ = nc.clip_grad_norm(grads, schedule.clip)
            nc.adam_step(model.params, grads, opt)
            steps += 1
            if strategy.tracks_steps:
                strategy.after_step(theta_before, model.flat(), task_flat)
        vl = fitter.valid_loss(valid_ex, 64)
        history.append(vl)
        log.info("experience %d epoch %d valid %.4f", exp, epoch, vl)
        if vl < best_loss:
            best_loss, best_snap, best_epoch, stale = vl, model.snapshot(), epoch, 0
        else:
            stale += 1
            if stale >= schedule.patience:
                break
    model.restore(best_snap)
    restored = fitter.valid_loss(valid_ex, 64)
    if abs(restored - best_loss) > 1e-9 * max(1.0, abs(best_loss)):
        raise TrainingError(f"restored validation loss {restored} differs from best {best_loss}")
    return {"epochs": len(history), "valid_losses": history, "best_epoch": best_epoch,
            "best_valid_loss": best_loss, "steps": steps}


def run_continual(model, vocab, scenario, strategy: Strategy, schedule: FinetuneSchedule | None = None,
                  eval_cfg: EvalConfig | None = None, seeds: Seeds | None = None, progress=None) -> ContinualResult:
    """Fine-tune ``model`` in place on experiences 1..T; evaluate test sets 1..t after each."""
    schedule = schedule or FinetuneSchedule()
    eval_cfg = eval_cfg or EvalConfig()
    seeds = seeds or Seeds()
    domains = [spec.name for spec in scenario.domains]
    T = scenario.T
    metric_names = [f"EM@{k}" for k in eval_cfg.ks] + list(USAGE_METRICS)
    matrices = {m: EvalMatrix(m, T) for m in metric_names}
    if model.config.kind == "encoder":
        model.reinit_lm_head(seeds.model + 1)
    fitter = _Fitter(model, vocab, schedule)
    data_rng, train_rng = nc.Rng(seeds.data, (29,)), nc.Rng(seeds.train, (31,))
    records = []
    for t, (spec, split) in enumerate(scenario.ood, start=1):
        started = time.time()
        tr, va = carve_validation(split.train, schedule.valid_fraction, data_rng.child(t))
        view = strategy.training_view(tr)
        strategy.before_experience(model.flat(), t)
        ex_rng = train_rng.child(t, 0).gen
        train_ex = fitter.examples(view, ex_rng)
        valid_ex = fitter.examples(va, np.random.default_rng(seeds.data + t))
        info = _train_experience(fitter, strategy, train_ex, valid_ex, schedule, train_rng.child(t, 1), t)
        strategy.after_experience(model.flat(), tr, t, fitter.sample_grad)
        buf = getattr(strategy, "buffer", None)
        if buf is not None and buf.capacity is not None and len(buf) > buf.capacity:
            raise AssertionError(f"replay buffer holds {len(buf)} > capacity {buf.capacity}")
        evaluated = []
        for i in range(1, t + 1):
            res = evaluate_all(model, vocab, scenario.ood[i - 1][1].test, eval_cfg)
            for m in metric_names:
                matrices[m].set(t, i, res[METRIC_TASK.get(m, API_CALL)][m])
            evaluated.append(i)
        rec = {"experience": t, "domain": spec.name, "train_methods": len(tr), "valid_methods": len(va),
               "view_methods": len(view), "train_examples": len(train_ex), "evaluated": evaluated,
               "buffer": None if buf is None else len(buf), "seconds": round(time.time() - started, 2),
               **info}
        records.append(rec)
        log.info("experience %d (%s) done: %s", t, spec.name, {m: matrices[m].get(t, t) for m in metric_names})
        if progress:
            progress(rec)
    return ContinualResult(domains, matrices, records, strategy.describe())
