from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .. import metrics
from ..model.decode import generate_usage_batch, topk_batch
from .config import EvalConfig, eval_threads
from .tasks import API_CALL, API_USAGE, build_task_instances

CALL_METRICS = ("EM@1", "EM@5", "EM@10")
USAGE_METRICS = ("BLEU", "EM", "codebleu_lite")
CHUNK = 256     # instances per work unit; fixed so results do not depend on the thread count


@dataclass
class Outputs:
    """Raw model outputs for one test set, so pooled sets can be scored without re-running the model."""
    ks: tuple
    candidates: list = field(default_factory=list)    # ranked top-k tokens per api_call instance
    call_truths: list = field(default_factory=list)
    predictions: list = field(default_factory=list)   # generated tokens per api_usage instance
    usage_truths: list = field(default_factory=list)

    def __add__(self, other: "Outputs") -> "Outputs":
        return Outputs(self.ks, self.candidates + other.candidates, self.call_truths + other.call_truths,
                       self.predictions + other.predictions, self.usage_truths + other.usage_truths)

    def scores(self) -> dict:
        if self.call_truths:
            call = {f"EM@{k}": metrics.em_at_k(self.candidates, self.call_truths, k) for k in self.ks}
        else:
            call = {f"EM@{k}": float("nan") for k in self.ks}
        if self.usage_truths:
            usage = {"BLEU": metrics.bleu(self.predictions, self.usage_truths),
                     "EM": metrics.exact_match(self.predictions, self.usage_truths),
                     "codebleu_lite": metrics.codebleu_lite(self.predictions, self.usage_truths)}
        else:
            usage = {m: float("nan") for m in USAGE_METRICS}
        return {API_CALL: call, API_USAGE: usage}


def _cap(instances, cfg: EvalConfig):
    return instances if cfg.max_instances is None else instances[:cfg.max_instances]


def _chunked(fn, items, pool):
    chunks = [items[s:s + CHUNK] for s in range(0, len(items), CHUNK)]
    parts = pool.map(fn, chunks) if pool is not None else map(fn, chunks)
    return [x for part in parts for x in part]


def run_outputs(model, vocab, samples: Sequence, cfg: EvalConfig) -> Outputs:
    out = Outputs(tuple(cfg.ks))
    calls = _cap(build_task_instances(samples, API_CALL)[0], cfg)
    usages = _cap(build_task_instances(samples, API_USAGE)[0], cfg)
    if calls and max(cfg.ks) > vocab.size:
        raise ValueError(f"k={max(cfg.ks)} exceeds the vocabulary size {vocab.size}")
    threads = eval_threads()
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        if calls:
            ranked = _chunked(lambda c: topk_batch(model, c, max(cfg.ks), cfg.batch),
                              [vocab.encode(x.prefix) for x in calls], pool)
            out.candidates = [vocab.decode(r) for r in ranked]
            out.call_truths = [x.truth[0] for x in calls]
        if usages:
            gen = _chunked(lambda c: generate_usage_batch(model, c, vocab.itos, cfg.max_new, cfg.batch),
                           [vocab.encode(x.prefix) for x in usages], pool)
            out.predictions = [vocab.decode(g) for g in gen]
            out.usage_truths = [list(x.truth) for x in usages]
    finally:
        if pool is not None:
            pool.shutdown()
    return out


def evaluate_all(model, vocab, samples, cfg: EvalConfig) -> dict:
    return run_outputs(model, vocab, samples, cfg).scores()


def evaluate_call(model, vocab, samples, cfg: EvalConfig) -> dict:
    return evaluate_all(model, vocab, samples, cfg)[API_CALL]


def evaluate_usage(model, vocab, samples, cfg: EvalConfig) -> dict:
    return evaluate_all(model, vocab, samples, cfg)[API_USAGE]
