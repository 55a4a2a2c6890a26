"""Continual fine-tuning strategies: Naive, Replay, Cumulative, EWC, SI, RWalk.

Penalty and bookkeeping operations work on flat parameter vectors (the
model's parameters concatenated in name order). Regularizer bookkeeping
always uses the task-loss gradient, never the penalty gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .numcore import Rng


# ---------------------------------------------------------------- replay

@dataclass
class ReplayBuffer:
    capacity: int | None
    items: list = field(default_factory=list)    # (sample, experience_index)

    def counts(self) -> dict:
        out: dict = {}
        for _, e in self.items:
            out[e] = out.get(e, 0) + 1
        return out

    def __len__(self):
        return len(self.items)


def _quotas(capacity: int, available: dict) -> dict:
    """Equal shares, remainder to the earliest experiences, shortfalls redistributed."""
    quota = {}
    active = sorted(available)
    remaining = capacity
    while active:
        share, extra = divmod(remaining, len(active))
        trial = {e: share + (1 if pos < extra else 0) for pos, e in enumerate(active)}
        short = [e for e in active if available[e] < trial[e]]
        if not short:
            quota.update(trial)
            break
        for e in short:
            quota[e] = available[e]
            remaining -= available[e]
        active = [e for e in active if e not in short]
    return quota


def replay_update(buffer: ReplayBuffer, experience_train: Sequence, experience_index: int,
                  rng: Rng) -> ReplayBuffer:
    if buffer.capacity is None:
        buffer.items.extend((s, experience_index) for s in experience_train)
        return buffer
    by_exp: dict = {}
    for s, e in buffer.items:
        by_exp.setdefault(e, []).append(s)
    by_exp[experience_index] = list(experience_train)
    quota = _quotas(buffer.capacity, {e: len(v) for e, v in by_exp.items()})
    items = []
    for e in sorted(by_exp):
        pool = by_exp[e]
        q = quota[e]
        if q >= len(pool):
            keep = range(len(pool))
        else:
            keep = sorted(rng.child(e).choice(len(pool), size=q, replace=False).tolist())
        items.extend((pool[k], e) for k in keep)
    buffer.items = items
    assert len(buffer.items) <= buffer.capacity
    return buffer


def replay_view(buffer: ReplayBuffer, current_train: Sequence) -> list:
    return list(current_train) + [s for s, _ in buffer.items]


# ---------------------------------------------------------------- EWC

@dataclass
class EwcState:
    lam: float = 100.0
    anchors: list = field(default_factory=list)    # (theta_star, fisher)


def empirical_fisher(grad_fn: Callable, examples: Sequence) -> np.ndarray:
    """Mean of per-example squared gradients; ``grad_fn(example) -> flat gradient``."""
    total = None
    for ex in examples:
        g = grad_fn(ex)
        total = g * g if total is None else total + g * g
    return total / len(examples)


def ewc_consolidate(state: EwcState, theta: np.ndarray, grad_fn: Callable, experience_train: Sequence,
                    n_fisher: int = 256, rng: Rng | None = None) -> EwcState:
    n = len(experience_train)
    if n_fisher >= n:
        chosen = list(experience_train)
    else:
        idx = sorted((rng or Rng(0)).choice(n, size=n_fisher, replace=False).tolist())
        chosen = [experience_train[i] for i in idx]
    state.anchors.append((np.array(theta, copy=True), empirical_fisher(grad_fn, chosen)))
    return state


def ewc_penalty(theta: np.ndarray, state: EwcState) -> tuple[float, np.ndarray]:
    grad = np.zeros_like(theta)
    value = 0.0
    for star, fisher in state.anchors:
        d = theta - star
        value += 0.5 * state.lam * float((fisher * d * d).sum())
        grad += state.lam * fisher * d
    return value, grad


# ---------------------------------------------------------------- SI

@dataclass
class SiState:
    c: float = 0.1
    xi: float = 0.1
    omega: np.ndarray | None = None
    big_omega: np.ndarray | None = None
    anchor: np.ndarray | None = None

    def ensure(self, theta: np.ndarray) -> None:
        if self.anchor is None:
            self.anchor = np.array(theta, copy=True)
            self.omega = np.zeros_like(theta)
            self.big_omega = np.zeros_like(theta)


def si_after_step(state: SiState, grads: np.ndarray, theta_before: np.ndarray,
                  theta_after: np.ndarray) -> SiState:
    state.ensure(theta_before)
    state.omega += -grads * (theta_after - theta_before)
    return state


def si_consolidate(state: SiState, theta_now: np.ndarray) -> SiState:
    state.ensure(theta_now)
    delta = theta_now - state.anchor
    state.big_omega += np.maximum(state.omega / (delta * delta + state.xi), 0.0)
    state.omega = np.zeros_like(theta_now)
    state.anchor = np.array(theta_now, copy=True)
    return state


def si_penalty(theta: np.ndarray, state: SiState) -> tuple[float, np.ndarray]:
    if state.anchor is None:
        return 0.0, np.zeros_like(theta)
    d = theta - state.anchor
    return state.c * float((state.big_omega * d * d).sum()), 2.0 * state.c * state.big_omega * d


# ---------------------------------------------------------------- RWalk

@dataclass
class RwalkState:
    lam: float = 1.0
    alpha: float = 0.9
    xi: float = 0.1
    f_ema: np.ndarray | None = None
    s_accum: np.ndarray | None = None
    s_prev: np.ndarray | None = None
    anchors: list = field(default_factory=list)    # (theta_star, importance)

    def ensure(self, theta: np.ndarray) -> None:
        if self.f_ema is None:
            self.f_ema = np.zeros_like(theta)
            self.s_accum = np.zeros_like(theta)
            self.s_prev = np.zeros_like(theta)


def rwalk_after_step(state: RwalkState, grads: np.ndarray, theta_before: np.ndarray,
                     theta_after: np.ndarray) -> RwalkState:
    state.ensure(theta_before)
    state.f_ema = state.alpha * state.f_ema + (1.0 - state.alpha) * grads * grads
    delta = theta_after - theta_before
    gain = np.maximum(-grads * delta, 0.0)
    state.s_accum += gain / (0.5 * state.f_ema * delta * delta + state.xi)
    return state


def rwalk_consolidate(state: RwalkState, theta_now: np.ndarray) -> RwalkState:
    state.ensure(theta_now)
    s_norm = 0.5 * (state.s_prev + state.s_accum)
    state.anchors.append((np.array(theta_now, copy=True), state.f_ema + s_norm))
    state.s_prev = s_norm
    state.s_accum = np.zeros_like(theta_now)
    return state


def rwalk_penalty(theta: np.ndarray, state: RwalkState) -> tuple[float, np.ndarray]:
    grad = np.zeros_like(theta)
    value = 0.0
    for star, imp in state.anchors:
        d = theta - star
        value += state.lam * float((imp * d * d).sum())
        grad += 2.0 * state.lam * imp * d
    return value, grad


# ---------------------------------------------------------------- strategy objects

class Strategy:
    """Training-loop hooks. The base class is the Naive strategy: every hook is inert."""

    name = "naive"
    PARAMS: dict = {}

    def __init__(self, **params):
        unknown = set(params) - set(self.PARAMS)
        if unknown:
            raise ValueError(f"unknown parameter(s) for strategy {self.name!r}: {sorted(unknown)}")
        self.params = {**self.PARAMS, **params}
        self.rng = Rng(int(self.params.get("seed", 0)), (17,))

    @property
    def has_penalty(self) -> bool:
        return False

    @property
    def tracks_steps(self) -> bool:
        return False

    def before_experience(self, theta: np.ndarray, experience_index: int) -> None:
        pass

    def training_view(self, current_train: Sequence) -> list:
        return list(current_train)

    def penalty(self, theta: np.ndarray) -> tuple[float, np.ndarray | None]:
        return 0.0, None

    def after_step(self, theta_before: np.ndarray, theta_after: np.ndarray, grads: np.ndarray) -> None:
        pass

    def after_experience(self, theta: np.ndarray, experience_train: Sequence, experience_index: int,
                         grad_fn: Callable | None = None) -> None:
        pass

    def describe(self) -> dict:
        return {"name": self.name, "params": dict(sorted(self.params.items()))}


class Naive(Strategy):
    name = "naive"


class Replay(Strategy):
    name = "replay"
    PARAMS = {"buffer_size": 200, "seed": 0}

    def __init__(self, **params):
        super().__init__(**params)
        if int(self.params["buffer_size"]) <= 0:
            raise ValueError("buffer_size must be positive")
        self.buffer = ReplayBuffer(int(self.params["buffer_size"]))

    def training_view(self, current_train):
        return replay_view(self.buffer, current_train)

    def after_experience(self, theta, experience_train, experience_index, grad_fn=None):
        replay_update(self.buffer, experience_train, experience_index, self.rng.child(experience_index))


class Cumulative(Replay):
    name = "cumulative"
    PARAMS = {"seed": 0}

    def __init__(self, **params):
        Strategy.__init__(self, **params)
        self.buffer = ReplayBuffer(None)


class EWC(Strategy):
    name = "ewc"
    PARAMS = {"lam": 100.0, "n_fisher": 256, "seed": 0}

    def __init__(self, **params):
        super().__init__(**params)
        self.state = EwcState(lam=float(self.params["lam"]))

    @property
    def has_penalty(self):
        return self.state.lam != 0.0

    def penalty(self, theta):
        if not self.state.anchors:
            return 0.0, None
        return ewc_penalty(theta, self.state)

    def after_experience(self, theta, experience_train, experience_index, grad_fn=None):
        ewc_consolidate(self.state, theta, grad_fn, experience_train, int(self.params["n_fisher"]),
                        self.rng.child(experience_index))


class SI(Strategy):
    name = "si"
    PARAMS = {"c": 0.1, "xi": 0.1, "seed": 0}

    def __init__(self, **params):
        super().__init__(**params)
        self.state = SiState(c=float(self.params["c"]), xi=float(self.params["xi"]))

    @property
    def has_penalty(self):
        return self.state.c != 0.0

    @property
    def tracks_steps(self):
        return True

    def before_experience(self, theta, experience_index):
        self.state.ensure(theta)

    def penalty(self, theta):
        return si_penalty(theta, self.state)

    def after_step(self, theta_before, theta_after, grads):
        si_after_step(self.state, grads, theta_before, theta_after)

    def after_experience(self, theta, experience_train, experience_index, grad_fn=None):
        si_consolidate(self.state, theta)


class RWalk(Strategy):
    name = "rwalk"
    PARAMS = {"lam": 1.0, "alpha": 0.9, "xi": 0.1, "seed": 0}

    def __init__(self, **params):
        super().__init__(**params)
        if not 0.0 < float(self.params["alpha"]) < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        self.state = RwalkState(lam=float(self.params["lam"]), alpha=float(self.params["alpha"]),
                                xi=float(self.params["xi"]))

    @property
    def has_penalty(self):
        return self.state.lam != 0.0

    @property
    def tracks_steps(self):
        return True

    def penalty(self, theta):
        if not self.state.anchors:
            return 0.0, None
        return rwalk_penalty(theta, self.state)

    def after_step(self, theta_before, theta_after, grads):
        rwalk_after_step(self.state, grads, theta_before, theta_after)

    def after_experience(self, theta, experience_train, experience_index, grad_fn=None):
        rwalk_consolidate(self.state, theta)


STRATEGIES = {cls.name: cls for cls in (Naive, Replay, Cumulative, EWC, SI, RWalk)}


def make_strategy(block: dict | str) -> Strategy:
    """Build from ``{"name": ..., "params": {...}}``; unknown names or params raise ValueError."""
    if isinstance(block, str):
        block = {"name": block, "params": {}}
    extra = set(block) - {"name", "params"}
    if extra:
        raise ValueError(f"unknown strategy block key(s): {sorted(extra)}")
    name = block.get("name")
    if name not in STRATEGIES:
        raise ValueError(f"unknown strategy {name!r}; expected one of {sorted(STRATEGIES)}")
    return STRATEGIES[name](**(block.get("params") or {}))
