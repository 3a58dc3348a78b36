"""Synthetic multivariate series driven by a random directed graph.

Every node ``i`` carries its own sinusoid and receives, for each incoming
edge ``j -> i`` with weight ``w``, the value of node ``j`` ``lag`` steps
earlier::

    x_i(t) = a_i sin(2 pi t / period_i + phase_i) + sum_j w_ji x_j(t - lag) + noise

Incoming weights of a node sum to less than 0.9, which keeps the recursion
stable. Steps before ``lag`` see no parent contribution.
"""
from pathlib import Path

import numpy as np

from .exceptions import ConfigError


def random_digraph(num_nodes, num_edges, rng):
    """``num_edges`` distinct ordered pairs without self loops, with positive weights."""
    max_edges = num_nodes * (num_nodes - 1)
    if num_edges > max_edges:
        raise ConfigError(f"{num_edges} edges requested but a {num_nodes}-node digraph has at most {max_edges}")
    pairs = [(i, j) for i in range(num_nodes) for j in range(num_nodes) if i != j]
    chosen = rng.choice(len(pairs), size=num_edges, replace=False)
    edges = sorted(pairs[c] for c in chosen)
    indeg = np.zeros(num_nodes, dtype=int)
    for _, dst in edges:
        indeg[dst] += 1
    raw = rng.uniform(0.5, 0.9, size=num_edges)
    return [(s, d, float(w / max(1, indeg[d]))) for (s, d), w in zip(edges, raw)]


def base_signals(num_nodes, length, rng, amplitude=(1.0, 2.0), period=(10.0, 30.0)):
    amp = rng.uniform(*amplitude, size=num_nodes)
    per = rng.uniform(*period, size=num_nodes)
    phase = rng.uniform(0, 2 * np.pi, size=num_nodes)
    t = np.arange(length)[:, None]
    return amp * np.sin(2 * np.pi * t / per + phase)


def simulate(base, edges, lag, noise):
    """Run the lagged recursion; ``noise`` is a ``T x N`` array added at every step."""
    T, N = base.shape
    x = np.zeros((T, N))
    for t in range(T):
        x[t] = base[t] + noise[t]
        if t >= lag:
            for s, d, w in edges:
                x[t, d] += w * x[t - lag, s]
    return x


def make_synthetic(num_nodes=10, num_edges=15, lag=3, noise=0.1, length=5000, seed=0):
    """Return ``(series[T, N], edges)`` where ``edges`` holds ``(src, dst, weight)``."""
    if lag < 1:
        raise ConfigError(f"lag must be >= 1, got {lag}")
    if noise < 0:
        raise ConfigError(f"noise must be non-negative, got {noise}")
    rng = np.random.default_rng(seed)
    edges = random_digraph(num_nodes, num_edges, rng)
    base = base_signals(num_nodes, length, rng)
    eps = rng.normal(0.0, noise, size=(length, num_nodes)) if noise > 0 else np.zeros((length, num_nodes))
    return simulate(base, edges, lag, eps), edges


def write_synthetic(out_dir, series, edges):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series_path = out_dir / "series.csv"
    edges_path = out_dir / "edges.csv"
    np.savetxt(series_path, series, delimiter=",", fmt="%.17g")
    with open(edges_path, "w") as fh:
        fh.write("src,dst,weight\n")
        for s, d, w in edges:
            fh.write(f"{s},{d},{w:.17g}\n")
    return series_path, edges_path


def read_edges(path):
    edges = []
    with open(path) as fh:
        next(fh)
        for line in fh:
            if line.strip():
                s, d, w = line.strip().split(",")
                edges.append((int(s), int(d), float(w)))
    return edges
