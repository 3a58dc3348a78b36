import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtgnn import tensor as T
from mtgnn.exceptions import ConfigError, MissingInputError
from mtgnn.graph_learning import AdjacencyMatrix, GraphLearner, topk_sparsify
from mtgnn.tensor import Tensor

from conftest import numeric_grad, rel_err

# scalar-loop evaluation of the N=3 example (alpha=1, identity Theta), frozen
ORACLE_N3 = np.array([[0.0, 0.0, 0.0],
                      [0.0, 0.0, 0.0],
                      [0.22420558950633432, 0.22420558950633432, 0.0]])


def learner_with(E1, E2, Th1, Th2, alpha=1.0, k=None):
    n, s = np.shape(E1)
    gl = GraphLearner(n, embed_dim=s, alpha=alpha, k=k or n)
    gl.E1, gl.E2 = Tensor(E1, requires_grad=True), Tensor(E2, requires_grad=True)
    gl.Theta1, gl.Theta2 = Tensor(Th1, requires_grad=True), Tensor(Th2, requires_grad=True)
    return gl


def test_small_example_matches_frozen_oracle():
    gl = learner_with([[1, 0], [0, 1], [1, 1]], [[0, 1], [1, 0], [0.5, 0.5]], np.eye(2), np.eye(2))
    np.testing.assert_allclose(gl().data, ORACLE_N3, atol=1e-12, rtol=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 50), st.integers(1, 8), st.floats(0.1, 5.0), st.data())
def test_uni_directed_invariants(n, s, alpha, data):
    k = data.draw(st.integers(1, n))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    A = GraphLearner(n, s, alpha, k, rng=rng)().data
    assert np.all(A * A.T == 0)
    assert np.all(A >= 0)
    assert np.all((A > 0).sum(axis=1) <= k)


def test_symmetric_inputs_give_zero(rng):
    E = rng.normal(size=(6, 3))
    Th = rng.normal(size=(3, 3))
    assert np.all(learner_with(E, E, Th, Th, alpha=2.0)().data == 0.0)


def test_static_features_identity_and_frozen(rng):
    gl = GraphLearner(4, embed_dim=4, alpha=1.5, k=4, rng=rng).set_static_features(np.eye(4))
    M1 = T.tanh(T.mul_scalar(T.matmul(gl.E1, gl.Theta1), gl.alpha)).data
    np.testing.assert_allclose(M1, np.tanh(1.5 * gl.Theta1.data))
    T.backward(T.sum(gl.scores()))
    assert gl.E1.grad is None and gl.E2.grad is None
    assert gl.Theta1.grad is not None
    # Theta1 != Theta2, so the antisymmetric part no longer vanishes
    assert np.abs(gl.scores().data).sum() > 0


def test_static_features_reshape_theta(rng):
    gl = GraphLearner(5, embed_dim=3, k=2, rng=rng).set_static_features(rng.normal(size=(5, 7)))
    assert gl.Theta1.shape == (7, 3) and gl.Theta2.shape == (7, 3)
    assert gl().shape == (5, 5)


def test_gradient_wrt_E1_matches_fd(rng):
    gl = GraphLearner(5, embed_dim=3, alpha=2.0, k=5, rng=rng)
    R = rng.normal(size=(5, 5))
    T.backward(T.sum(T.hadamard(gl(), R)))
    num = numeric_grad(lambda: float((gl().data * R).sum()), gl.E1.data)
    assert rel_err(gl.E1.grad, num) <= 1e-4


def test_topk_examples():
    np.testing.assert_array_equal(topk_sparsify(np.array([0.5, 0.1, 0.9]), 1), [0, 0, 0.9])
    np.testing.assert_array_equal(topk_sparsify(np.array([0.3, 0.3, 0.2]), 1), [0.3, 0, 0])
    row = np.array([0.4, 0.2, 0.6])
    np.testing.assert_array_equal(topk_sparsify(row, 3), row)


@pytest.mark.parametrize("mode", ["directed", "undirected", "global"])
def test_other_modes_shape_and_sparsity(mode, rng):
    A = GraphLearner(7, 4, 3.0, 3, mode=mode, rng=rng)().data
    assert A.shape == (7, 7) and np.all(A >= 0) and np.all((A > 0).sum(1) <= 3)
    if mode == "undirected":
        dense = GraphLearner(7, 4, 3.0, 7, mode=mode, rng=np.random.default_rng(0))().data
        np.testing.assert_allclose(dense, dense.T)


def test_dynamic_mode_rows_are_distributions(rng):
    gl = GraphLearner(5, 4, k=5, mode="dynamic", in_dim=2, rng=rng)
    A = gl(x_last=rng.normal(size=(3, 5, 2))).data
    assert A.shape == (3, 5, 5)
    np.testing.assert_allclose(A.sum(-1), 1.0)
    with pytest.raises(MissingInputError):
        gl()
    with pytest.raises(ConfigError):
        gl.adjacency()


def test_predefined_mode(rng):
    P = rng.uniform(size=(4, 4))
    np.testing.assert_array_equal(GraphLearner(4, k=4, mode="predefined", predefined=P)().data, P)
    with pytest.raises(MissingInputError):
        GraphLearner(4, k=4, mode="predefined")


def test_subset_matches_submatrix(rng):
    gl = GraphLearner(8, 4, k=8, rng=rng)
    idx = np.array([6, 1, 3])
    full = gl.scores().data
    np.testing.assert_allclose(gl.scores(idx).data, full[np.ix_(idx, idx)], atol=1e-15)


def test_config_errors():
    with pytest.raises(ConfigError):
        GraphLearner(4, k=5)
    with pytest.raises(ConfigError):
        GraphLearner(4, k=2, alpha=0)
    with pytest.raises(ConfigError):
        GraphLearner(4, k=2, mode="spiral")


def test_adjacency_matrix_helpers(tmp_path):
    adj = AdjacencyMatrix(np.array([[0, 0.5, 0.9], [0, 0, 0.2], [0.1, 0, 0]]), k=2)
    assert adj.edges() == [(0, 2, 0.9), (0, 1, 0.5), (1, 2, 0.2), (2, 0, 0.1)]
    assert adj.top_neighbors(0, 1) == [(2, 0.9)]
    adj.export(tmp_path / "a.csv", tmp_path / "e.csv")
    np.testing.assert_allclose(np.loadtxt(tmp_path / "a.csv", delimiter=","), adj.values)
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "src,dst,weight" and len(lines) == 5
