import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtgnn.exceptions import ConfigError, LengthError
from mtgnn.tensor import Tensor
from mtgnn.temporal_conv import INCEPTION_WIDTHS, DilatedInceptionLayer, TCModule, receptive_field


def inception_oracle(z, kernels, biases, d):
    b, c, n, t = z.shape
    L = t - d * (max(k.shape[-1] for k in kernels) - 1)
    groups = []
    for K, bias in zip(kernels, biases):
        w = K.shape[-1]
        out = np.zeros((b, K.shape[0], n, L))
        for bi in range(b):
            for o in range(K.shape[0]):
                for v in range(n):
                    for tau in range(L):
                        pos = t - L + tau  # right-aligned position in the input
                        acc = bias[o]
                        for ci in range(c):
                            for s in range(w):
                                acc += K[o, ci, 0, s] * z[bi, ci, v, pos - d * s]
                        out[bi, o, v, tau] = acc
        groups.append(out)
    return np.concatenate(groups, axis=1)


def test_delta_kernels_return_last_steps():
    layer = DilatedInceptionLayer(1, 4, 1)
    for K, b in zip(layer.kernels, layer.biases):
        K.data[:] = 0.0
        K.data[..., 0] = 1.0
        b.data[:] = 0.0
    z = np.arange(8.0).reshape(1, 1, 1, 8)
    out = layer(Tensor(z)).data
    assert out.shape == (1, 4, 1, 2)
    for g in range(4):
        np.testing.assert_array_equal(out[0, g, 0], [6.0, 7.0])


def test_length_with_dilation_two():
    layer = DilatedInceptionLayer(1, 4, 2)
    assert layer(Tensor(np.zeros((1, 1, 1, 13)))).shape[-1] == 1
    with pytest.raises(LengthError, match="at least 13"):
        layer(Tensor(np.zeros((1, 1, 1, 12))))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(0, 4), st.integers(0, 2**31))
def test_matches_loop_oracle(d, extra, seed):
    rng = np.random.default_rng(seed)
    layer = DilatedInceptionLayer(2, 8, d, rng=rng)
    z = rng.normal(size=(1, 2, 2, 6 * d + 1 + extra))
    ref = inception_oracle(z, [K.data for K in layer.kernels], [b.data for b in layer.biases], d)
    np.testing.assert_allclose(layer(Tensor(z)).data, ref, atol=1e-12, rtol=0)


def test_single_width_variant(rng):
    layer = DilatedInceptionLayer(2, 4, 1, widths=(7,), rng=rng)
    z = rng.normal(size=(1, 2, 3, 9))
    ref = inception_oracle(z, [layer.kernels[0].data], [layer.biases[0].data], 1)
    np.testing.assert_allclose(layer(Tensor(z)).data, ref, atol=1e-12)


def test_channels_must_split_evenly():
    with pytest.raises(ConfigError):
        DilatedInceptionLayer(1, 6)


def test_gate_limits(rng):
    tc = TCModule(2, 4, 1, rng=rng)
    x = Tensor(rng.normal(size=(2, 2, 3, 10)))
    for b in tc.gate.biases:
        b.data[:] = -1e3
    assert np.abs(tc(x).data).max() < 1e-300
    for K, b in zip(tc.gate.kernels, tc.gate.biases):
        K.data[:] = 0.0
        b.data[:] = 0.0
    np.testing.assert_allclose(tc(x).data, 0.5 * np.tanh(tc.filter(x).data), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_gated_output_bounded(scale, seed):
    rng = np.random.default_rng(seed)
    tc = TCModule(1, 4, 1, rng=rng)
    assert np.abs(tc(Tensor(scale * rng.normal(size=(1, 1, 2, 8)))).data).max() <= 1.0


def test_receptive_field_examples():
    assert receptive_field(1, 2) == 2
    assert receptive_field(1, 2, 2) == 2
    assert receptive_field(5, 7, 2) == 187 >= 168
    assert receptive_field(3, 7, 1) == 19 >= 12


@pytest.mark.parametrize("m", range(1, 7))
@pytest.mark.parametrize("c", [2, 3, 7])
@pytest.mark.parametrize("q", [1, 2, 3])
def test_receptive_field_grid(m, c, q):
    expected = m * (c - 1) + 1 if q == 1 else 1 + (c - 1) * sum(q ** i for i in range(m))
    assert receptive_field(m, c, q) == expected
    assert receptive_field(m, c, q, mode="linear") == m * (c - 1) + 1
    # a stack of plain convs of width c shrinks a length-R input to exactly one step
    length = expected
    for i in range(m):
        length -= (q ** i) * (c - 1)
    assert length == 1


def test_receptive_field_bad_rate():
    with pytest.raises(ConfigError):
        receptive_field(3, 7, 0)


def test_widths_constant():
    assert INCEPTION_WIDTHS == (2, 3, 6, 7)
