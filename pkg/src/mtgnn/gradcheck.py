"""Finite-difference verification of every differentiable operation.

Each check draws random small instances, reduces the op output to a scalar
with fixed random weights, and compares the reverse-mode gradient of every
input against central differences. The reported error of an instance is
``||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-6)``.
"""
import numpy as np

from . import tensor as T
from .graph_conv import GCModule, MixHopLayer, normalize_adjacency
from .graph_learning import GraphLearner
from .model import MtgnnConfig, MtgnnModel
from .temporal_conv import DilatedInceptionLayer, TCModule
from .tensor import Tensor


def _leaf(rng, shape, low=-1.0, high=1.0, away=None):
    x = rng.uniform(low, high, size=shape)
    if away is not None:
        # keep entries at least ``away`` from zero (kinks of relu / abs)
        x = np.where(np.abs(x) < away, np.sign(x + 1e-300) * away + x, x)
    return Tensor(x, requires_grad=True)


def gradient_error(fn, leaves, rng, h=1e-5, max_coords=30):
    """Largest relative error over ``leaves`` for the scalar ``sum(fn() * R)``."""
    out = fn()
    R = rng.normal(size=out.shape)
    for t in leaves:
        t.grad = None
    T.backward(T.sum(T.hadamard(out, R)))
    worst = 0.0
    for t in leaves:
        analytic = np.zeros(t.shape) if t.grad is None else t.grad.copy()
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        a = analytic.reshape(-1)[coords]
        n = np.empty(len(coords))
        with T.no_grad():
            for j, c in enumerate(coords):
                keep = flat[c]
                flat[c] = keep + h
                up = float(np.sum(fn().data * R))
                flat[c] = keep - h
                down = float(np.sum(fn().data * R))
                flat[c] = keep
                n[j] = (up - down) / (2 * h)
        denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-6)
        worst = max(worst, float(np.linalg.norm(a - n) / denom))
    return worst


def _own(t):
    t.data = np.array(t.data, dtype=np.float64, copy=True)
    return t


def _module_case(module, inputs, call):
    leaves = [_own(t) for t in inputs] + [_own(p) for p in module.parameters()]
    return (lambda: call(*inputs)), leaves


# each case returns (fn, leaves) for one random instance

def _matmul(rng):
    batched = rng.random() < 0.5
    m, k, n = rng.integers(1, 5, size=3)
    a = _leaf(rng, ((2,) if batched else ()) + (m, k))
    b = _leaf(rng, (k, n))
    return (lambda: T.matmul(a, b)), [a, b]


def _conv(rng):
    d = int(rng.integers(1, 3))
    k = int(rng.integers(1, 4))
    t = d * (k - 1) + int(rng.integers(1, 5))
    x = _leaf(rng, (2, 3, 2, t))
    w = _leaf(rng, (4, 3, 1, k))
    b = _leaf(rng, (4,))
    return (lambda: T.conv1d_dilated(x, w, d, b)), [x, w, b]


def _unary(op, away=None):
    def case(rng):
        x = _leaf(rng, (3, 4), away=away)
        return (lambda: op(x)), [x]
    return case


def _binary(op, positive_b=False):
    def case(rng):
        a = _leaf(rng, (3, 4))
        b = _leaf(rng, (4,), 0.5, 1.5) if positive_b else _leaf(rng, (3, 1) if rng.random() < 0.5 else (4,))
        return (lambda: op(a, b)), [a, b]
    return case


def _concat(rng):
    axis = int(rng.integers(0, 2))
    a = _leaf(rng, (2, 3))
    b = _leaf(rng, (2, 3))
    return (lambda: T.concat([a, b, a], axis)), [a, b]


def _shape_ops(rng):
    x = _leaf(rng, (2, 3, 5))
    idx = rng.integers(0, 2, size=4)
    return (lambda: T.reshape(T.transpose(T.take(T.pad_last(T.slice_last_steps(T.narrow(x, 1, 1, 2), 3), 2, 1),
                                                  idx, axis=1), (2, 0, 1)), (-1, 4))), [x]


def _softmax(rng):
    x = _leaf(rng, (3, 4))
    axis = int(rng.integers(0, 2))
    return (lambda: T.softmax(x, axis)), [x]


def _dropout(rng):
    x = _leaf(rng, (4, 5))
    seed = int(rng.integers(1 << 30))
    return (lambda: T.dropout(x, 0.3, True, np.random.default_rng(seed))), [x]


def _layer_norm(rng):
    x = _leaf(rng, (2, 3, 4, 2))
    w = _leaf(rng, (3, 4, 1))
    b = _leaf(rng, (3, 4, 1))
    axes = (1,) if rng.random() < 0.5 else (1, 2)
    return (lambda: T.layer_norm(x, axes, w, b)), [x, w, b]


def _reductions(rng):
    x = _leaf(rng, (3, 4), away=0.05)
    return (lambda: T.add(T.sum(T.absolute(x), axis=1), T.mean(T.square(x), axis=1))), [x]


def _channel_map(rng):
    x = _leaf(rng, (2, 3, 2, 3))
    w = _leaf(rng, (3, 4))
    return (lambda: T.channel_map(x, w)), [x, w]


def _topk(rng):
    # well separated values keep the retained set fixed under perturbation
    x = Tensor(rng.permutation(12).reshape(3, 4) * 0.1 + rng.uniform(0, 0.01, (3, 4)), requires_grad=True)
    k = int(rng.integers(1, 5))
    return (lambda: T.topk_mask(x, k)), [x]


def _normalize(rng):
    A = _leaf(rng, (4, 4), 0.0, 1.0)
    return (lambda: normalize_adjacency(A)), [A]


def _graph_learning(rng):
    mode = ("uni_directed", "directed", "undirected", "global")[int(rng.integers(0, 4))]
    n = int(rng.integers(3, 7))
    gl = GraphLearner(n, embed_dim=4, alpha=float(rng.uniform(0.5, 3)), k=n, mode=mode, rng=rng)
    return _module_case(gl, [], lambda: gl())


def _dynamic_graph(rng):
    gl = GraphLearner(4, embed_dim=3, k=4, mode="dynamic", in_dim=2, rng=rng)
    x = _leaf(rng, (2, 4, 2))
    return _module_case(gl, [x], lambda x: gl(x_last=x))


def _mixhop(rng):
    layer = MixHopLayer(3, 2, K=int(rng.integers(1, 4)), beta=float(rng.uniform(0, 1)), rng=rng)
    h = _leaf(rng, (2, 3, 4, 2))
    A = _leaf(rng, (4, 4), 0.0, 1.0)
    return _module_case(layer, [h, A], lambda h, A: layer(h, normalize_adjacency(A)))


def _gc(rng):
    module = GCModule(3, 2, K=2, beta=0.05, rng=rng)
    h = _leaf(rng, (2, 3, 4, 2))
    A = _leaf(rng, (4, 4), 0.0, 1.0)
    return _module_case(module, [h, A], lambda h, A: module(h, A))


def _inception(rng):
    d = int(rng.integers(1, 3))
    layer = DilatedInceptionLayer(2, 4, d, rng=rng)
    z = _leaf(rng, (1, 2, 2, 6 * d + 3))
    return _module_case(layer, [z], layer)


def _tc(rng):
    module = TCModule(2, 4, 1, rng=rng)
    z = _leaf(rng, (2, 2, 2, 9))
    return _module_case(module, [z], module)


def _model(rng):
    n = int(rng.integers(3, 6))
    mode = ("uni_directed", "directed", "global")[int(rng.integers(0, 3))]
    cfg = MtgnnConfig(num_nodes=n, in_dim=2, input_len=10, output_len=2, layers=2, residual_channels=4,
                      conv_channels=4, skip_channels=4, end_channels=6, top_k=n, embed_dim=4,
                      graph_mode=mode, dropout=0.0)
    model = MtgnnModel(cfg, seed=int(rng.integers(1 << 30))).eval()
    x = _leaf(rng, (2, 2, n, 10))
    fn, leaves = _module_case(model, [x], model)
    return fn, leaves


CASES = {
    "matmul": _matmul,
    "conv1d_dilated": _conv,
    "tanh": _unary(T.tanh),
    "sigmoid": _unary(T.sigmoid),
    "relu": _unary(T.relu, away=0.1),
    "add": _binary(T.add),
    "sub": _binary(T.sub),
    "hadamard": _binary(T.hadamard),
    "div": _binary(T.div, positive_b=True),
    "mul_scalar": _unary(lambda x: T.mul_scalar(x, -1.7)),
    "concat": _concat,
    "shape_ops": _shape_ops,
    "softmax": _softmax,
    "dropout": _dropout,
    "layer_norm": _layer_norm,
    "reductions": _reductions,
    "channel_map": _channel_map,
    "topk_mask": _topk,
    "normalize_adjacency": _normalize,
    "graph_learning": _graph_learning,
    "dynamic_graph": _dynamic_graph,
    "mixhop": _mixhop,
    "gc": _gc,
    "dilated_inception": _inception,
    "tc": _tc,
    "model": _model,
}


def run_gradcheck(ops=None, instances=20, seed=0, h=1e-5):
    """Return ``{op: max relative error}`` over ``instances`` random draws per op."""
    names = list(CASES) if not ops else list(ops)
    unknown = [n for n in names if n not in CASES]
    if unknown:
        raise KeyError(f"unknown gradcheck ops {unknown}; available: {sorted(CASES)}")
    results = {}
    for i, name in enumerate(names):
        rng = np.random.default_rng([seed, i])
        worst = 0.0
        for _ in range(instances):
            fn, leaves = CASES[name](rng)
            worst = max(worst, gradient_error(fn, leaves, rng, h=h))
        results[name] = worst
    return results
