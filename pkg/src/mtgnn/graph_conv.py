"""Mix-hop propagation and the inflow/outflow graph convolution module."""
import numpy as np

from . import tensor as T
from .exceptions import ConfigError, DimensionError
from .nn import Module, uniform_param


def normalize_adjacency(A):
    """Row-normalize with self loops: ``(A + I) / (1 + A.sum(-1))``.

    Accepts a single ``[n, n]`` matrix or a batch ``[..., n, n]``.
    """
    A = T.as_tensor(A)
    n = A.shape[-1]
    if A.ndim < 2 or A.shape[-2] != n:
        raise DimensionError(f"adjacency must be square, got {A.shape}")
    degree = T.add_scalar(T.sum(A, axis=-1, keepdims=True), 1.0)
    return T.div(T.add(A, np.eye(n)), degree)


def propagate(a_tilde, h):
    """Mix node states: ``out[b,c,v,t] = sum_w a_tilde[v,w] h[b,c,w,t]``."""
    if a_tilde.ndim == 3:
        # per-sample graphs [b, n, n] broadcast over channels
        a_tilde = T.reshape(a_tilde, (a_tilde.shape[0], 1) + a_tilde.shape[1:])
    return T.matmul(a_tilde, h)


class MixHopLayer(Module):
    """``K`` propagation steps with retain ratio ``beta`` and per-hop channel selectors.

    With ``selection=False`` the layer returns the last propagation state
    unchanged, which requires ``d_in == d_out``.
    """

    def __init__(self, d_in, d_out, K=2, beta=0.05, selection=True, rng=None):
        if K < 1:
            raise ConfigError(f"propagation depth K must be >= 1, got {K}")
        if not 0.0 <= beta <= 1.0:
            raise ConfigError(f"retain ratio beta must lie in [0, 1], got {beta}")
        if not selection and d_in != d_out:
            raise ConfigError("without hop selection the layer cannot change the channel count "
                              f"({d_in} -> {d_out})")
        rng = np.random.default_rng() if rng is None else rng
        self.d_in, self.d_out = d_in, d_out
        self.K = K
        self.beta = float(beta)
        self.selection = selection
        bound = 1.0 / np.sqrt(d_in)
        self.W = [uniform_param(rng, (d_in, d_out), bound) for _ in range(K + 1)] if selection else []

    def hops(self, h_in, a_tilde):
        states = [h_in]
        h = h_in
        for _ in range(self.K):
            h = T.add(T.mul_scalar(h_in, self.beta), T.mul_scalar(propagate(a_tilde, h), 1.0 - self.beta))
            states.append(h)
        return states

    def forward(self, h_in, a_tilde):
        h_in = T.as_tensor(h_in)
        if h_in.ndim != 4 or h_in.shape[1] != self.d_in:
            raise DimensionError(f"mix-hop expects [b, {self.d_in}, n, t], got {h_in.shape}")
        states = self.hops(h_in, a_tilde)
        if not self.selection:
            return states[-1]
        out = T.channel_map(states[0], self.W[0])
        for h, W in zip(states[1:], self.W[1:]):
            out = T.add(out, T.channel_map(h, W))
        return out


class GCModule(Module):
    """Sum of two mix-hop layers fed ``A`` (inflow) and ``A.T`` (outflow)."""

    def __init__(self, d_in, d_out, K=2, beta=0.05, selection=True, rng=None):
        rng = np.random.default_rng() if rng is None else rng
        self.inflow = MixHopLayer(d_in, d_out, K, beta, selection, rng)
        self.outflow = MixHopLayer(d_in, d_out, K, beta, selection, rng)

    def forward(self, h_in, A):
        A = T.as_tensor(A)
        return T.add(self.inflow(h_in, normalize_adjacency(A)),
                     self.outflow(h_in, normalize_adjacency(T.transpose(A))))
