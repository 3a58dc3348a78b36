"""Dense float64 tensors with reverse-mode differentiation.

Every differentiable operation records a node carrying a monotonically
increasing sequence number, its operand tensors and a backward rule. The
sequence numbers form the tape: ``backward`` gathers the nodes reachable from
the loss and visits them in exact reverse recording order. Graphs are
released by ordinary garbage collection once the output tensors go away.

Leaf tensors (``requires_grad=True`` and not produced by an op) accumulate
into ``.grad``; calling ``backward`` twice without zeroing doubles them.
"""
import contextlib
import itertools

import numpy as np

from .exceptions import ContractError, DimensionError, LengthError

_seq = itertools.count()
_grad_enabled = True
_mac_counter = None


class Node:
    __slots__ = ("seq", "parents", "backward_fn", "op")

    def __init__(self, parents, backward_fn, op):
        self.seq = next(_seq)
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op


class Tensor:
    """Immutable-by-convention float64 array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_node", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._node = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def tape_id(self):
        return None if self._node is None else self._node.seq

    @property
    def is_leaf(self):
        return self._node is None

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self):
        return self.shape[0]

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return mul_scalar(self, other)
        return hadamard(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return mul_scalar(self, 1.0 / other)
        return div(self, other)

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled():
    return _grad_enabled


class MacCounter:
    """Tallies multiply-accumulates performed by ``matmul`` while active."""

    def __init__(self):
        self.macs = 0


@contextlib.contextmanager
def count_macs():
    global _mac_counter
    prev = _mac_counter
    counter = _mac_counter = MacCounter()
    try:
        yield counter
    finally:
        _mac_counter = prev
        if prev is not None:
            prev.macs += counter.macs


def _result(data, parents, backward_fn, op):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = Node(parents, backward_fn, op)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_axis(axis, ndim):
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} out of range for rank {ndim}")
    return axis % ndim


def backward(loss):
    """Populate ``.grad`` on every leaf that ``loss`` depends on."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    seed = np.ones_like(loss.data)
    if loss._node is None:
        if not loss.requires_grad:
            raise ContractError("loss is not on the active tape")
        loss.grad = seed if loss.grad is None else loss.grad + seed
        return

    found = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in found:
            continue
        found[id(t)] = t
        for p in t._node.parents:
            if p._node is not None and id(p) not in found:
                stack.append(p)
    order = sorted(found.values(), key=lambda t: t._node.seq, reverse=True)

    grads = {id(loss): seed}
    for t in order:
        g = grads.pop(id(t), None)
        if g is None:
            continue
        parent_grads = t._node.backward_fn(g)
        for p, pg in zip(t._node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if p._node is None:
                p.grad = pg.copy() if p.grad is None else p.grad + pg
            elif id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg


# ---------------------------------------------------------------- arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def hadamard(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
                   "hadamard")


mul = hadamard


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return _result(out, (a, b), bw, "div")


def mul_scalar(a, c):
    a = as_tensor(a)
    c = float(c)
    return _result(a.data * c, (a,), lambda g: (g * c,), "mul_scalar")


def add_scalar(a, c):
    a = as_tensor(a)
    return _result(a.data + float(c), (a,), lambda g: (g,), "add_scalar")


def matmul(a, b):
    """Batched matrix product ``a[..., m, k] @ b[..., k, n]`` with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    try:
        batch = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul batch mismatch: {a.shape} @ {b.shape}") from None
    if _mac_counter is not None:
        _mac_counter.macs += int(np.prod(batch, dtype=np.int64)) * a.shape[-2] * a.shape[-1] * b.shape[-1]
    ad, bd = a.data, b.data

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _result(ad @ bd, (a, b), bw, "matmul")


# --------------------------------------------------------------- elementwise


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a):
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a):
    a = as_tensor(a)
    # derivative at exactly 0 is 0
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def absolute(a):
    a = as_tensor(a)
    sign = np.sign(a.data)
    return _result(np.abs(a.data), (a,), lambda g: (g * sign,), "abs")


def square(a):
    a = as_tensor(a)
    ad = a.data
    return _result(ad * ad, (a,), lambda g: (2.0 * g * ad,), "square")


# ---------------------------------------------------------------- reductions


def sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape
    if axis is not None:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axis = tuple(_check_axis(ax, a.ndim) for ax in axes)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw, "sum")


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        n = int(np.prod([a.shape[_check_axis(ax, a.ndim)] for ax in axes]))
    return mul_scalar(sum(a, axis, keepdims), 1.0 / n)


# --------------------------------------------------------------------- shape


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None):
    """Permute axes; with ``axes=None`` swap the last two."""
    a = as_tensor(a)
    if axes is None:
        if a.ndim < 2:
            raise DimensionError(f"transpose needs rank >= 2, got {a.ndim}")
        axes = list(range(a.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(_check_axis(ax, a.ndim) for ax in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"invalid permutation {axes} for rank {a.ndim}")
    inv = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    axis = _check_axis(axis, tensors[0].ndim)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat shape mismatch: {[t.shape for t in tensors]}") from exc

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, tuple(tensors), bw, "concat")


def slice_last_steps(a, length):
    """Keep the trailing ``length`` entries of the last axis."""
    a = as_tensor(a)
    t = a.shape[-1]
    if not 1 <= length <= t:
        raise LengthError(f"cannot keep last {length} steps of a length-{t} sequence")
    shape = a.shape

    def bw(g):
        full = np.zeros(shape)
        full[..., t - length:] = g
        return (full,)

    return _result(a.data[..., t - length:], (a,), bw, "slice_last_steps")


def narrow(a, axis, start, length):
    """Slice ``length`` entries starting at ``start`` along ``axis``."""
    a = as_tensor(a)
    axis = _check_axis(axis, a.ndim)
    if start < 0 or length < 1 or start + length > a.shape[axis]:
        raise LengthError(f"cannot take [{start}, {start + length}) of axis {axis} with size {a.shape[axis]}")
    sl = (slice(None),) * axis + (slice(start, start + length),)
    shape = a.shape

    def bw(g):
        full = np.zeros(shape)
        full[sl] = g
        return (full,)

    return _result(a.data[sl], (a,), bw, "narrow")


def pad_last(a, left=0, right=0):
    """Zero-pad the last axis."""
    a = as_tensor(a)
    if left == 0 and right == 0:
        return a
    widths = [(0, 0)] * (a.ndim - 1) + [(left, right)]
    stop = a.shape[-1] + left
    return _result(np.pad(a.data, widths), (a,), lambda g: (g[..., left:stop],), "pad_last")


def pad_left(a, amount):
    """Zero-pad the last axis on the left."""
    return pad_last(a, amount, 0)


def take(a, index, axis=0):
    """Gather entries of ``a`` at integer ``index`` along ``axis``."""
    a = as_tensor(a)
    axis = _check_axis(axis, a.ndim)
    index = np.asarray(index, dtype=np.intp)
    shape = a.shape

    def bw(g):
        full = np.zeros(shape)
        np.add.at(full, (slice(None),) * axis + (index,), g)
        return (full,)

    return _result(np.take(a.data, index, axis=axis), (a,), bw, "take")


# ------------------------------------------------------------ normalization


def softmax(a, axis=-1):
    a = as_tensor(a)
    axis = _check_axis(axis, a.ndim)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), bw, "softmax")


def dropout(a, p, training, rng=None):
    """Inverted dropout: retained entries scaled by 1/(1-p); identity when not training."""
    a = as_tensor(a)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    rng = np.random.default_rng() if rng is None else rng
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    return _result(a.data * mask, (a,), lambda g: (g * mask,), "dropout")


def layer_norm(x, axes, weight=None, bias=None, eps=1e-5):
    """Normalize ``x`` to zero mean / unit variance over ``axes``, then scale and shift.

    ``weight`` and ``bias`` must broadcast against ``x``.
    """
    x = as_tensor(x)
    axes = tuple(_check_axis(ax, x.ndim) for ax in ((axes,) if np.isscalar(axes) else axes))
    n = int(np.prod([x.shape[ax] for ax in axes]))
    mu = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        gx = (g - g.sum(axis=axes, keepdims=True) / n
              - xhat * (g * xhat).sum(axis=axes, keepdims=True) / n) * inv
        return (gx,)

    out = _result(xhat, (x,), bw, "layer_norm")
    if weight is not None:
        out = hadamard(out, weight)
    if bias is not None:
        out = add(out, bias)
    return out


# --------------------------------------------------------------- convolution


def conv1d_dilated(x, kernel, dilation=1, bias=None):
    """Valid dilated convolution along the last axis.

    ``x`` is ``[b, c_in, n, t]`` and ``kernel`` is ``[c_out, c_in, 1, k]``; tap
    ``s`` multiplies the input ``dilation * s`` steps before the output step,
    so the result has length ``t - dilation * (k - 1)``.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4 or kernel.shape[2] != 1:
        raise DimensionError(f"conv1d_dilated expects [b,c,n,t] and [o,c,1,k], got {x.shape}, {kernel.shape}")
    if kernel.shape[1] != x.shape[1]:
        raise DimensionError(f"channel mismatch: input {x.shape} vs kernel {kernel.shape}")
    if dilation < 1:
        raise ValueError(f"dilation must be positive, got {dilation}")
    b, c, n, t = x.shape
    c_out, _, _, k = kernel.shape
    span = dilation * (k - 1)
    if t <= span:
        raise LengthError(f"sequence length {t} too short: need at least {span + 1} steps "
                          f"for width {k} at dilation {dilation}")
    length = t - span
    xd = x.data
    w = kernel.data[:, :, 0, :]  # [o, c, k]
    offsets = [dilation * (k - 1 - s) for s in range(k)]
    if k == 1:
        cols = xd[..., None]
    else:
        cols = np.stack([xd[..., off:off + length] for off in offsets], axis=-1)  # [b,c,n,L,k]
    out = np.tensordot(cols, w, axes=([1, 4], [1, 2]))  # [b,n,L,o]
    out = out.transpose(0, 3, 1, 2)
    parents = (x, kernel)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        parents = (x, kernel, bias)

    def bw(g):
        gx = gw = gb = None
        if x.requires_grad:
            gcols = np.tensordot(g, w, axes=([1], [0]))  # [b,n,L,c,k]
            gx = np.zeros((b, c, n, t))
            for s, off in enumerate(offsets):
                gx[..., off:off + length] += gcols[..., s].transpose(0, 3, 1, 2)
        if kernel.requires_grad:
            gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))[:, :, None, :]  # [o,c,1,k]
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb)[:len(parents)]

    return _result(out, parents, bw, "conv1d_dilated")


def channel_map(x, weight):
    """Apply a channel-mixing matrix: ``out[b,o,n,t] = sum_c x[b,c,n,t] * weight[c,o]``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 2 or weight.shape[0] != x.shape[1]:
        raise DimensionError(f"channel mismatch: input {x.shape} vs weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = np.tensordot(xd, wd, axes=([1], [0])).transpose(0, 3, 1, 2)

    def bw(g):
        gx = gw = None
        if x.requires_grad:
            gx = np.tensordot(g, wd, axes=([1], [1])).transpose(0, 3, 1, 2)
        if weight.requires_grad:
            gw = np.tensordot(xd, g, axes=([0, 2, 3], [0, 2, 3]))
        return gx, gw

    return _result(out, (x, weight), bw, "channel_map")


# ---------------------------------------------------------------- sparsity


def topk_indices(values, k):
    """Indices of the ``k`` largest entries along the last axis, ties to the lowest index."""
    values = np.asarray(values, dtype=np.float64)
    k = min(int(k), values.shape[-1])
    order = np.argsort(-values, axis=-1, kind="stable")
    return order[..., :k]


def topk_sparsify(row, k):
    """Zero all but the ``k`` largest entries (last axis); retained values are unchanged."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    row = np.asarray(row, dtype=np.float64)
    mask = np.zeros(row.shape, dtype=bool)
    np.put_along_axis(mask, topk_indices(row, k), True, axis=-1)
    return np.where(mask, row, 0.0)


def topk_mask(a, k):
    """Differentiable top-k along the last axis; dropped entries get zero gradient."""
    a = as_tensor(a)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    mask = np.zeros(a.shape)
    np.put_along_axis(mask, topk_indices(a.data, k), 1.0, axis=-1)
    return _result(a.data * mask, (a,), lambda g: (g * mask,), "topk_mask")
