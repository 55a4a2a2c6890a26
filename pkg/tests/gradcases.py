"""Random gradient-check instances shared by the unit and acceptance suites."""
import numpy as np

from clforge import numcore as nc
from clforge import strategies as S

TOL = 1e-5


def _away_from_zero(r, shape, lo=0.2, hi=2.0):
    return r.uniform(lo, hi, size=shape) * r.choice([-1.0, 1.0], size=shape)


def _check(build, arrays, r):
    """Max relative error of backward() against central differences over every input."""
    weights = None
    worst = 0.0
    for pos in range(len(arrays)):
        def f(x, pos=pos):
            args = [nc.Tensor(a) for a in arrays]
            args[pos] = nc.Tensor(x)
            with nc.no_grad():
                out = build(*args)
            return float((out.data * weights).sum())

        ts = [nc.Tensor(a.copy(), requires_grad=True) for a in arrays]
        out = build(*ts)
        if weights is None:
            weights = r.normal(size=out.shape)
        loss = nc.sum_(out * nc.Tensor(weights))
        grads = nc.backward(loss, ts)
        worst = max(worst, nc.max_relative_error(grads[ts[pos]], nc.finite_difference(f, arrays[pos])))
    return worst


def _softmax_mask(r, shape):
    m = r.random(shape) > 0.3
    m[..., 0] = True
    return m


def primitive_case(name, seed):
    """One random instance for primitive ``name``; returns the max relative error."""
    r = np.random.default_rng(seed)
    s = (2, 3)
    if name == "add":
        return _check(nc.add, [r.normal(size=s), r.normal(size=(3,))], r)
    if name == "sub":
        return _check(nc.sub, [r.normal(size=s), r.normal(size=(2, 1))], r)
    if name == "mul":
        return _check(nc.mul, [r.normal(size=s), r.normal(size=s)], r)
    if name == "div":
        return _check(nc.div, [r.normal(size=s), _away_from_zero(r, s, 0.5, 2.0)], r)
    if name == "neg":
        return _check(nc.neg, [r.normal(size=s)], r)
    if name == "exp":
        return _check(nc.exp, [r.normal(size=s)], r)
    if name == "log":
        return _check(nc.log, [r.uniform(0.3, 3.0, size=s)], r)
    if name == "tanh":
        return _check(nc.tanh, [r.normal(size=s)], r)
    if name == "relu":
        return _check(nc.relu, [_away_from_zero(r, s, 0.05)], r)
    if name == "gelu":
        return _check(nc.gelu, [r.normal(size=s) * 2], r)
    if name == "square":
        return _check(nc.square, [r.normal(size=s)], r)
    if name == "sum":
        return _check(lambda a: nc.sum_(a, axis=1, keepdims=True), [r.normal(size=(2, 3, 2))], r)
    if name == "mean":
        return _check(lambda a: nc.mean(a, axis=0), [r.normal(size=(3, 4))], r)
    if name == "reshape":
        return _check(lambda a: nc.reshape(a, (3, 2)), [r.normal(size=s)], r)
    if name == "transpose":
        return _check(lambda a: nc.transpose(a, (2, 0, 1)), [r.normal(size=(2, 3, 2))], r)
    if name == "getitem":
        idx = r.integers(0, 4, size=5)
        return _check(lambda a: nc.getitem(a, idx), [r.normal(size=(4, 2))], r)
    if name == "concat":
        return _check(lambda a, b: nc.concat([a, b], axis=1), [r.normal(size=(2, 2)), r.normal(size=(2, 3))], r)
    if name == "matmul":
        return _check(nc.matmul, [r.normal(size=(2, 3, 4)), r.normal(size=(4, 2))], r)
    if name == "softmax":
        mask = _softmax_mask(r, (2, 5))
        return _check(lambda a: nc.softmax(a, mask), [r.normal(size=(2, 5))], r)
    if name == "log_softmax":
        return _check(nc.log_softmax, [r.normal(size=(3, 4))], r)
    if name == "layer_norm":
        return _check(nc.layer_norm, [r.normal(size=(2, 5)), r.normal(size=5), r.normal(size=5)], r)
    if name == "embedding":
        ids = r.integers(0, 5, size=(2, 3))
        return _check(lambda w: nc.embedding(w, ids), [r.normal(size=(5, 3))], r)
    if name == "cross_entropy":
        targets = r.integers(0, 4, size=3)
        w = r.uniform(0.0, 1.0, size=3) + (r.random(3) > 0.5)
        return _check(lambda z: nc.cross_entropy(z, targets, w), [r.normal(size=(3, 4))], r)
    if name == "dropout":
        seed2 = int(r.integers(1 << 30))
        return _check(lambda a: nc.dropout(a, 0.3, np.random.default_rng(seed2)), [r.normal(size=(3, 4))], r)
    raise KeyError(name)


def penalty_case(name, seed):
    """Gradient of a strategy penalty against central differences on a random instance."""
    r = np.random.default_rng(seed)
    n = 7
    theta = r.normal(size=n)
    if name == "ewc":
        st = S.EwcState(lam=float(r.uniform(0.1, 10)))
        for _ in range(int(r.integers(1, 4))):
            st.anchors.append((r.normal(size=n), r.uniform(0, 2, size=n)))
        fn = lambda th: S.ewc_penalty(th, st)
    elif name == "si":
        st = S.SiState(c=float(r.uniform(0.1, 10)), xi=0.1)
        st.big_omega = r.uniform(0, 2, size=n)
        st.anchor = r.normal(size=n)
        fn = lambda th: S.si_penalty(th, st)
    elif name == "rwalk":
        st = S.RwalkState(lam=float(r.uniform(0.1, 10)), alpha=0.9, xi=0.1)
        for _ in range(int(r.integers(1, 4))):
            st.anchors.append((r.normal(size=n), r.uniform(0, 2, size=n)))
        fn = lambda th: S.rwalk_penalty(th, st)
    else:
        raise KeyError(name)
    _, analytic = fn(theta)
    numeric = nc.finite_difference(lambda th: fn(th)[0], theta)
    return nc.max_relative_error(analytic, numeric)


PRIMITIVE_NAMES = ["add", "sub", "mul", "div", "neg", "exp", "log", "tanh", "relu", "gelu", "square", "sum",
                   "mean", "reshape", "transpose", "getitem", "concat", "matmul", "softmax", "log_softmax",
                   "layer_norm", "embedding", "cross_entropy", "dropout"]
PENALTY_NAMES = ["ewc", "si", "rwalk"]
