"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every differentiable primitive records one entry on the active ``GradTape``
when at least one input requires a gradient. ``backward`` replays the tape
in reverse creation order, which is a valid topological order because an
operation can only consume tensors that already exist.
"""
from __future__ import annotations

import contextlib
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64


@dataclass
class _Record:
    name: str
    out: "Tensor"
    inputs: tuple
    backward: Callable


@dataclass
class GradTape:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def clear(self):
        self.records.clear()


_LOCAL = threading.local()      # one tape and one grad switch per thread


def current_tape() -> GradTape:
    tape = getattr(_LOCAL, "tape", None)
    if tape is None:
        tape = _LOCAL.tape = GradTape()
    return tape


def grad_enabled() -> bool:
    return getattr(_LOCAL, "enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = grad_enabled()
    _LOCAL.enabled = False
    try:
        yield
    finally:
        _LOCAL.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() requires a single-element tensor")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(name: str, data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    needs = grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        current_tape().records.append(_Record(name, out, tuple(inputs), backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def backward(loss: Tensor, params: Sequence[Tensor] | None = None) -> dict:
    """Reverse-mode gradients of a scalar ``loss``.

    Returns a mapping from leaf tensor to gradient array. When ``params`` is
    given, every listed tensor appears in the result (zeros if unreachable).
    The tape is cleared afterwards.
    """
    tape = current_tape()
    if loss.data.size != 1:
        tape.clear()
        raise ValueError("backward requires scalar")
    grads: dict[int, np.ndarray] = {}
    leaves: dict[int, Tensor] = {}
    if loss.requires_grad:
        grads[id(loss)] = np.ones_like(loss.data)
        produced = {id(r.out) for r in tape.records}
        try:
            for rec in reversed(tape.records):
                g = grads.pop(id(rec.out), None)
                if g is None:
                    continue
                with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                    in_grads = rec.backward(g)     # non-finite results are caught just below
                for t, gi in zip(rec.inputs, in_grads):
                    if gi is None or not t.requires_grad:
                        continue
                    if not np.isfinite(gi).all():
                        raise FloatingPointError(f"non-finite gradient produced by '{rec.name}'")
                    k = id(t)
                    grads[k] = grads[k] + gi if k in grads else gi
                    if k not in produced:
                        leaves[k] = t
        finally:
            tape.clear()
    else:
        tape.clear()
    if params is None:
        out = {leaves[k]: grads[k] for k in leaves}
    else:
        out = {p: grads.get(id(p), np.zeros_like(p.data)) for p in params}
    for t, g in out.items():
        t.grad = g
    return out


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make("mul", ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if np.any(bd == 0):
        raise ZeroDivisionError("division by zero in 'div'")
    return _make("div", ad / bd, (a, b),
                 lambda g: (_unbroadcast(g / bd, ad.shape),
                            _unbroadcast(-g * ad / (bd * bd), bd.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    if not np.isfinite(y).all():
        raise FloatingPointError("overflow in 'exp'")
    return _make("exp", y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise FloatingPointError("non-positive input to 'log'")
    x = a.data
    return _make("log", np.log(x), (a,), lambda g: (g / x,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    m = a.data > 0
    return _make("relu", a.data * m, (a,), lambda g: (g * m,))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """Tanh approximation of GELU."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))
    y = 0.5 * x * (1.0 + t)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _make("gelu", y, (a,), bw)


def square(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _make("square", x * x, (a,), lambda g: (2.0 * g * x,))


# ---------------------------------------------------------------- reductions / shape

def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make("sum", a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([shape[ax] for ax in axes]))

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, shape).copy(),)

    return _make("mean", a.data.mean(axis=axis, keepdims=keepdims), (a,), bw)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _make("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if not axes:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _make("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def bw(g):
        out = np.zeros(shape, dtype=DTYPE)
        if _is_basic_index(idx):
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return _make("getitem", a.data[idx], (a,), bw)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum(sizes)[:-1]
    return _make("concat", np.concatenate([t.data for t in ts], axis=axis), ts,
                 lambda g: tuple(np.split(g, bounds, axis=axis)))


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires operands of rank >= 2")
    ad, bd = a.data, b.data

    def bw(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2 and ad.ndim > 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make("matmul", ad @ bd, (a, b), bw)


# ---------------------------------------------------------------- neural primitives

def softmax(a, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; ``mask`` (broadcastable, True = keep)."""
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        if not np.broadcast_to(mask, x.shape).any(axis=-1).all():
            raise ValueError("softmax row with every entry masked")
        x = np.where(mask, x, -np.inf)
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make("softmax", y, (a,), bw)


def log_softmax(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    m = x.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))
    y = x - lse

    def bw(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return _make("log_softmax", y, (a,), bw)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    gd = gamma.data
    y = xhat * gd + beta.data

    def bw(g):
        dxhat = g * gd
        dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                     - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make("layer_norm", y, (x, gamma, beta), bw)


def embedding(weight, ids: np.ndarray) -> Tensor:
    weight = as_tensor(weight)
    ids = np.asarray(ids, dtype=np.int64)
    shape = weight.shape

    def bw(g):
        out = np.zeros(shape, dtype=DTYPE)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, shape[-1]))
        return (out,)

    return _make("embedding", weight.data[ids], (weight,), bw)


def cross_entropy(logits, targets: np.ndarray, weights: np.ndarray | None = None) -> Tensor:
    """Weighted mean negative log-likelihood of ``targets`` under ``logits``.

    ``logits`` is (N, V); ``weights`` (N,) with zeros marking ignored rows.
    Returns 0 when the total weight is zero.
    """
    logits = as_tensor(logits)
    x = logits.data
    n = x.shape[0]
    targets = np.asarray(targets, dtype=np.int64)
    w = np.ones(n, dtype=DTYPE) if weights is None else np.asarray(weights, dtype=DTYPE)
    total = w.sum()
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    s = e.sum(axis=-1, keepdims=True)
    lse = (m + np.log(s))[:, 0]
    nll = lse - x[np.arange(n), targets]
    denom = total if total > 0 else 1.0
    loss = float((w * nll).sum() / denom)

    def bw(g):
        p = e / s
        p[np.arange(n), targets] -= 1.0
        return (p * (w / denom)[:, None] * g,)

    return _make("cross_entropy", np.asarray(loss), (logits,), bw)


def dropout(a, p: float, rng: np.random.Generator | None) -> Tensor:
    a = as_tensor(a)
    if p <= 0.0 or rng is None:
        return a
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    return _make("dropout", a.data * keep, (a,), lambda g: (g * keep,))


PRIMITIVES = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg, "exp": exp, "log": log,
    "tanh": tanh, "relu": relu, "gelu": gelu, "square": square, "sum": sum_, "mean": mean,
    "reshape": reshape, "transpose": transpose, "getitem": getitem, "concat": concat,
    "matmul": matmul, "softmax": softmax, "log_softmax": log_softmax,
    "layer_norm": layer_norm, "embedding": embedding, "cross_entropy": cross_entropy,
    "dropout": dropout,
}
