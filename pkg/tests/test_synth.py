import numpy as np
import pytest

from mtgnn.exceptions import ConfigError
from mtgnn.synth import base_signals, make_synthetic, random_digraph, read_edges, simulate, write_synthetic


def test_generator_contract(tmp_path):
    series, edges = make_synthetic(10, 15, 3, 0.1, length=300, seed=0)
    s, e = write_synthetic(tmp_path, series, edges)
    assert np.loadtxt(s, delimiter=",").shape == (300, 10)
    assert len(read_edges(e)) == 15
    assert len({(a, b) for a, b, _ in edges}) == 15
    assert all(a != b for a, b, _ in edges)


def test_noise_free_single_edge_oracle():
    rng = np.random.default_rng(0)
    base = base_signals(3, 50, rng)
    edges = [(0, 2, 0.7)]
    x = simulate(base, edges, lag=4, noise=np.zeros((50, 3)))
    np.testing.assert_array_equal(x[:, :2], base[:, :2])
    np.testing.assert_array_equal(x[:4, 2], base[:4, 2])
    np.testing.assert_allclose(x[4:, 2], base[4:, 2] + 0.7 * base[:-4, 0], atol=1e-15)


def test_seed_is_bit_identical(tmp_path):
    a = make_synthetic(5, 6, 2, 0.2, length=100, seed=4)
    b = make_synthetic(5, 6, 2, 0.2, length=100, seed=4)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]
    write_synthetic(tmp_path / "a", *a)
    write_synthetic(tmp_path / "b", *b)
    assert (tmp_path / "a/series.csv").read_bytes() == (tmp_path / "b/series.csv").read_bytes()


def test_too_many_edges():
    with pytest.raises(ConfigError):
        random_digraph(3, 7, np.random.default_rng(0))


def test_incoming_weights_keep_recursion_stable():
    edges = random_digraph(8, 40, np.random.default_rng(1))
    incoming = np.zeros(8)
    for _, d, w in edges:
        incoming[d] += w
    assert incoming.max() < 0.9
    series, _ = make_synthetic(8, 40, 1, 0.1, length=3000, seed=1)
    assert np.abs(series).max() < 100


def test_bad_arguments():
    with pytest.raises(ConfigError):
        make_synthetic(lag=0)
    with pytest.raises(ConfigError):
        make_synthetic(noise=-1)
