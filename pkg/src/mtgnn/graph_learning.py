"""Graph structure learning from node embeddings.

The default ``uni_directed`` construction is::

    M1 = tanh(alpha * E1 @ Theta1)
    M2 = tanh(alpha * E2 @ Theta2)
    A  = relu(tanh(alpha * (M1 @ M2.T - M2 @ M1.T)))

followed by keeping the ``k`` largest entries of every row. The argument of
the outer tanh is antisymmetric, so at most one of ``A[i, j]`` and
``A[j, i]`` can be positive.

Row ``i`` of an adjacency matrix lists the weights of the edges leaving node
``i`` (``A[i, j] > 0`` is read as the edge ``i -> j``).
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .exceptions import ConfigError, DimensionError, MissingInputError
from .nn import Module, uniform_param
from .tensor import Tensor

MODES = ("uni_directed", "directed", "undirected", "global", "dynamic", "predefined")


@dataclass
class AdjacencyMatrix:
    """A frozen N x N non-negative adjacency with at most ``k`` nonzeros per row."""

    values: np.ndarray
    k: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise DimensionError(f"adjacency must be square, got {self.values.shape}")

    @property
    def num_nodes(self):
        return self.values.shape[0]

    def edges(self):
        """``(src, dst, weight)`` for every positive entry, heaviest first."""
        src, dst = np.nonzero(self.values > 0)
        w = self.values[src, dst]
        order = np.lexsort((dst, src, -w))
        return [(int(src[i]), int(dst[i]), float(w[i])) for i in order]

    def top_neighbors(self, node, n=None):
        """Strongest outgoing edges of ``node`` as ``(dst, weight)`` pairs."""
        row = self.values[node]
        order = np.argsort(-row, kind="stable")
        picked = [(int(j), float(row[j])) for j in order if row[j] > 0]
        return picked if n is None else picked[:n]

    def export(self, matrix_path, edges_path=None):
        matrix_path = Path(matrix_path)
        with open(matrix_path, "w") as fh:
            for row in self.values:
                fh.write(",".join(f"{v:.12g}" for v in row) + "\n")
        if edges_path is not None:
            with open(edges_path, "w") as fh:
                fh.write("src,dst,weight\n")
                for s, d, w in self.edges():
                    fh.write(f"{s},{d},{w:.12g}\n")


def topk_sparsify(row, k):
    """Keep the ``k`` largest entries of ``row`` (ties to the lowest index)."""
    return T.topk_sparsify(row, k)


class GraphLearner(Module):
    """Learns an adjacency matrix over ``num_nodes`` nodes.

    Parameters
    ----------
    num_nodes : int
    embed_dim : int
        Width of the node embeddings ``E1``, ``E2`` (also the input width of
        the dynamic-mode projections).
    alpha : float
        Saturation rate of the tanh activations.
    k : int
        Number of retained neighbours per row.
    mode : str
        One of ``uni_directed``, ``directed``, ``undirected``, ``global``,
        ``dynamic`` or ``predefined``.
    in_dim : int
        Input feature width; only used by ``dynamic``.
    predefined : array, optional
        Fixed non-negative matrix for ``predefined`` mode.
    """

    def __init__(self, num_nodes, embed_dim=40, alpha=3.0, k=20, mode="uni_directed",
                 hidden_dim=None, in_dim=1, predefined=None, rng=None):
        if mode not in MODES:
            raise ConfigError(f"unknown graph mode {mode!r}; choose from {MODES}")
        if alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {alpha}")
        if not 1 <= k <= num_nodes:
            raise ConfigError(f"k={k} must lie in [1, N={num_nodes}]")
        rng = np.random.default_rng() if rng is None else rng
        self._rng = rng
        self.num_nodes = num_nodes
        self.alpha = float(alpha)
        self.k = int(k)
        self.mode = mode
        hidden_dim = embed_dim if hidden_dim is None else hidden_dim
        bound = 1.0 / np.sqrt(embed_dim)

        if mode in ("uni_directed", "directed", "undirected"):
            self.E1 = uniform_param(rng, (num_nodes, embed_dim), 0.5)
            self.Theta1 = uniform_param(rng, (embed_dim, hidden_dim), bound)
            if mode != "undirected":
                self.E2 = uniform_param(rng, (num_nodes, embed_dim), 0.5)
                self.Theta2 = uniform_param(rng, (embed_dim, hidden_dim), bound)
        elif mode == "global":
            self.W = uniform_param(rng, (num_nodes, num_nodes), 0.5)
        elif mode == "dynamic":
            b = 1.0 / np.sqrt(in_dim)
            self.W1 = uniform_param(rng, (in_dim, hidden_dim), b)
            self.W2 = uniform_param(rng, (in_dim, hidden_dim), b)
        else:
            if predefined is None:
                raise MissingInputError("predefined graph mode needs a supplied adjacency matrix")
            pre = np.asarray(predefined, dtype=np.float64)
            if pre.shape != (num_nodes, num_nodes):
                raise DimensionError(f"predefined adjacency shape {pre.shape} != ({num_nodes}, {num_nodes})")
            if (pre < 0).any():
                raise ValueError("predefined adjacency must be non-negative")
            self.A_fixed = Tensor(pre)

    def set_static_features(self, Z):
        """Freeze both embedding tables to a static node feature matrix ``Z``."""
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[0] != self.num_nodes:
            raise DimensionError(f"static features need {self.num_nodes} rows, got shape {Z.shape}")
        if self.mode not in ("uni_directed", "directed", "undirected"):
            raise ConfigError(f"static features are not used by {self.mode!r} mode")
        if Z.shape[1] != self.E1.shape[1]:
            rng = self._rng
            bound = 1.0 / np.sqrt(Z.shape[1])
            hidden = self.Theta1.shape[1]
            self.Theta1 = uniform_param(rng, (Z.shape[1], hidden), bound)
            if hasattr(self, "Theta2"):
                self.Theta2 = uniform_param(rng, (Z.shape[1], hidden), bound)
        self.E1 = Tensor(Z)
        if hasattr(self, "E2"):
            self.E2 = Tensor(Z.copy())
        return self

    def scores(self, idx=None, x_last=None):
        """Dense adjacency before top-k sparsification."""
        a = self.alpha

        def emb(E):
            return E if idx is None else T.take(E, idx, axis=0)

        if self.mode in ("uni_directed", "directed", "undirected"):
            M1 = T.tanh(T.mul_scalar(T.matmul(emb(self.E1), self.Theta1), a))
            if self.mode == "undirected":
                return T.relu(T.tanh(T.mul_scalar(T.matmul(M1, T.transpose(M1)), a)))
            M2 = T.tanh(T.mul_scalar(T.matmul(emb(self.E2), self.Theta2), a))
            S = T.matmul(M1, T.transpose(M2))
            if self.mode == "uni_directed":
                S = T.sub(S, T.matmul(M2, T.transpose(M1)))
            return T.relu(T.tanh(T.mul_scalar(S, a)))
        if self.mode == "global":
            W = self.W if idx is None else T.take(T.take(self.W, idx, axis=0), idx, axis=1)
            return T.relu(W)
        if self.mode == "dynamic":
            if x_last is None:
                raise MissingInputError("dynamic graph mode needs the window's node features")
            x_last = T.as_tensor(x_last)  # [b, n, D]
            left = T.tanh(T.matmul(x_last, self.W1))  # [b, n, s]
            right = T.tanh(T.matmul(T.transpose(self.W2), T.transpose(x_last)))  # [b, s, n]
            return T.softmax(T.matmul(left, right), axis=-1)
        A = self.A_fixed
        return A if idx is None else T.take(T.take(A, idx, axis=0), idx, axis=1)

    def forward(self, idx=None, x_last=None):
        """Sparsified adjacency over all nodes, or over the subset ``idx``."""
        return T.topk_mask(self.scores(idx, x_last), self.k)

    compute_adjacency = forward

    def adjacency(self, idx=None):
        """Frozen :class:`AdjacencyMatrix` (not available for dynamic mode)."""
        if self.mode == "dynamic":
            raise ConfigError("dynamic graphs depend on the input window; no static adjacency exists")
        with T.no_grad():
            values = self.forward(idx).data.copy()
        return AdjacencyMatrix(values, self.k)
