"""Task metrics (EM@k, EM, BLEU, CodeBLEU-lite) and the continual meta-metrics."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .corpus.lexer import CHAR, JAVA_KEYWORDS, NUM, STR

OBSERVED, LITERAL_T = "observed", "T"


# ---------------------------------------------------------------- task metrics

def em_at_k(candidates: Sequence[Sequence], truths: Sequence, k: int) -> float:
    if not truths or len(candidates) != len(truths):
        raise ValueError("em_at_k needs equally many candidate lists and truths (> 0)")
    if k < 1:
        raise ValueError("k must be positive")
    hits = 0
    for cand, truth in zip(candidates, truths):
        if len(cand) < k:
            raise ValueError(f"candidate list shorter than k={k}")
        hits += truth in list(cand[:k])
    return 100.0 * hits / len(truths)


def exact_match(preds: Sequence[Sequence], truths: Sequence[Sequence]) -> float:
    if not truths or len(preds) != len(truths):
        raise ValueError("exact_match needs equally many predictions and truths (> 0)")
    return 100.0 * sum(list(p) == list(t) for p, t in zip(preds, truths)) / len(truths)


def _ngrams(seq, n):
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def _bleu_fraction(preds, truths, max_n: int = 4, unigram_weight=None) -> float:
    """Corpus BLEU in [0, 1]; add-one smoothing for zero counts at orders >= 2.

    ``unigram_weight`` maps a token to a weight for the unigram precision
    (used by the keyword-weighted variant).
    """
    if not truths or len(preds) != len(truths):
        raise ValueError("bleu needs equally many predictions and truths (> 0)")
    matched = [0.0] * max_n
    total = [0.0] * max_n
    pred_len = ref_len = 0
    for p, t in zip(preds, truths):
        p, t = list(p), list(t)
        pred_len += len(p)
        ref_len += len(t)
        for n in range(1, max_n + 1):
            pc, tc = _ngrams(p, n), _ngrams(t, n)
            if n == 1 and unigram_weight is not None:
                matched[0] += sum(unigram_weight(g[0]) * min(c, tc[g]) for g, c in pc.items())
                total[0] += sum(unigram_weight(g[0]) * c for g, c in pc.items())
            else:
                matched[n - 1] += sum(min(c, tc[g]) for g, c in pc.items())
                total[n - 1] += sum(pc.values())
    if pred_len == 0 or matched[0] == 0:
        return 0.0
    log_p = 0.0
    for n in range(max_n):
        m, tot = matched[n], total[n]
        if n > 0 and m == 0:
            m, tot = m + 1.0, tot + 1.0
        log_p += math.log(m / tot) / max_n
    bp = 1.0 if pred_len > ref_len else math.exp(1.0 - ref_len / pred_len)
    return bp * math.exp(log_p)


def bleu(preds, truths) -> float:
    return 100.0 * _bleu_fraction(preds, truths)


def keyword_weight(tok: str) -> float:
    return 5.0 if tok in JAVA_KEYWORDS else 1.0


_OPEN = {"(": ")", "{": "}", "[": "]"}
_CLOSE = set(_OPEN.values())


def _leaf_kind(tok: str) -> str:
    if tok in JAVA_KEYWORDS or tok in (STR, NUM, CHAR):
        return tok
    if tok[:1].isalpha() or tok[:1] in "_$":
        return "ID"
    return tok


def bracket_subtrees(tokens) -> Counter:
    """Multiset of subtree signatures of the bracket-nesting tree.

    Leaves are abstracted to their kind (identifiers become ``ID``); the root
    counts as a subtree. Unmatched closers are leaves, unclosed openers close
    at the end.
    """
    out = Counter()
    stack = [["ROOT"]]
    for tok in tokens:
        if tok in _OPEN:
            stack.append([tok])
        elif tok in _CLOSE and len(stack) > 1 and _OPEN[stack[-1][0]] == tok:
            node = stack.pop()
            sig = node[0] + " ".join(node[1:]) + tok
            out[sig] += 1
            stack[-1].append(sig)
        else:
            stack[-1].append(_leaf_kind(tok))
    while len(stack) > 1:
        node = stack.pop()
        sig = node[0] + " ".join(node[1:]) + _OPEN[node[0]]
        out[sig] += 1
        stack[-1].append(sig)
    out["ROOT(" + " ".join(stack[0][1:]) + ")"] += 1
    return out


_DEF_FOLLOW = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "++", "--"}


def def_use_pairs(tokens) -> Counter:
    """(identifier, 'def'|'use') pairs from a syntactic def/use reading."""
    out = Counter()
    toks = list(tokens)
    for i, tok in enumerate(toks):
        if _leaf_kind(tok) != "ID":
            continue
        nxt = toks[i + 1] if i + 1 < len(toks) else ""
        prev = toks[i - 1] if i > 0 else ""
        declared = (prev in ("int", "long", "double", "boolean", "char", "byte", "short", "float", "]", ">")
                    or (_leaf_kind(prev) == "ID" and prev[:1].isupper())) and nxt in {"=", ";", ",", ")", ":"}
        out[(tok, "def" if nxt in _DEF_FOLLOW or declared else "use")] += 1
    return out


def _multiset_f1(pred_sets, truth_sets) -> float:
    match = sum(sum((p & t).values()) for p, t in zip(pred_sets, truth_sets))
    n_p = sum(sum(p.values()) for p in pred_sets)
    n_t = sum(sum(t.values()) for t in truth_sets)
    if n_p + n_t == 0:
        return 1.0
    return 2.0 * match / (n_p + n_t)


def codebleu_components(preds, truths) -> tuple:
    """(bleu, keyword-weighted bleu, bracket syntax F1, def-use F1), each in [0, 1]."""
    preds = [list(p) for p in preds]
    truths = [list(t) for t in truths]
    return (
        _bleu_fraction(preds, truths),
        _bleu_fraction(preds, truths, unigram_weight=keyword_weight),
        _multiset_f1([bracket_subtrees(p) for p in preds], [bracket_subtrees(t) for t in truths]),
        _multiset_f1([def_use_pairs(p) for p in preds], [def_use_pairs(t) for t in truths]),
    )


def codebleu_lite(preds, truths, weights=(0.25, 0.25, 0.25, 0.25)) -> float:
    if len(weights) != 4 or abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError("codebleu_lite weights must be four numbers summing to 1")
    comps = codebleu_components(preds, truths)
    return 100.0 * sum(w * c for w, c in zip(weights, comps))


# ---------------------------------------------------------------- meta-metrics

@dataclass
class EvalMatrix:
    """Lower-triangular step-by-domain matrix; steps and domains are 1-based."""

    metric_name: str
    T: int
    values: dict = field(default_factory=dict)

    def set(self, j: int, i: int, value: float) -> None:
        if not (1 <= i <= j <= self.T):
            raise ValueError(f"entry (step {j}, domain {i}) outside the lower triangle of T={self.T}")
        self.values[(j, i)] = float(value)

    def get(self, j: int, i: int) -> float:
        try:
            return self.values[(j, i)]
        except KeyError:
            raise KeyError(f"{self.metric_name}: no entry for step {j}, domain {i}") from None

    def column(self, i: int) -> list:
        return [self.get(j, i) for j in range(i, self.T + 1)]

    def is_complete(self) -> bool:
        return set(self.values) == {(j, i) for j in range(1, self.T + 1) for i in range(1, j + 1)}

    def rows(self) -> list:
        return [[self.values.get((j, i)) if i <= j else None for i in range(1, self.T + 1)]
                for j in range(1, self.T + 1)]

    @classmethod
    def from_rows(cls, metric_name: str, rows) -> "EvalMatrix":
        m = cls(metric_name, len(rows))
        for j, row in enumerate(rows, start=1):
            for i, v in enumerate(row, start=1):
                if v is not None:
                    m.set(j, i, v)
        return m


def average_metric(matrix: EvalMatrix, i: int, divisor_mode: str = OBSERVED) -> float:
    col = matrix.column(i)
    if divisor_mode == OBSERVED:
        return sum(col) / len(col)
    if divisor_mode == LITERAL_T:
        return sum(col) / matrix.T
    raise ValueError(f"unknown divisor_mode {divisor_mode!r}")


def forgetting(matrix: EvalMatrix, i: int, k: int) -> float:
    """First measurement on domain ``i`` minus the one at step ``k``; negative means positive transfer."""
    if not i < k <= matrix.T:
        raise ValueError(f"forgetting needs i < k <= T (got i={i}, k={k}, T={matrix.T})")
    return matrix.get(i, i) - matrix.get(k, i)


def summarize(matrix: EvalMatrix, domains: Sequence[str], divisor_mode: str = OBSERVED) -> tuple[dict, dict]:
    """A for every domain and F^T for domains 1..T-1."""
    A = {d: average_metric(matrix, i, divisor_mode) for i, d in enumerate(domains, start=1)}
    F = {d: forgetting(matrix, i, matrix.T) for i, d in enumerate(domains[:-1], start=1)}
    return A, F
