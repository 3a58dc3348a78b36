import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtgnn.data import Normalizer, load_csv, make_windows, split_bounds
from mtgnn.exceptions import ConfigError, LengthError, ParseError


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_small_csv(tmp_path):
    raw = load_csv(write(tmp_path, "1,2\n3,4\n5,6"))
    np.testing.assert_array_equal(raw.values, [[1, 2], [3, 4], [5, 6]])
    assert raw.shape == (3, 2)


def test_load_whitespace_and_header(tmp_path):
    raw = load_csv(write(tmp_path, "a b\n1 2\n3   4\n"), skip_header=True)
    assert raw.names == ["a", "b"]
    np.testing.assert_array_equal(raw.values, [[1, 2], [3, 4]])


def test_non_numeric_cell_cites_line(tmp_path):
    rows = ["1,2"] * 6 + ["1,x"] + ["3,4"]
    with pytest.raises(ParseError, match="line 7"):
        load_csv(write(tmp_path, "\n".join(rows)))


def test_ragged_and_empty(tmp_path):
    with pytest.raises(ParseError, match="line 2"):
        load_csv(write(tmp_path, "1,2\n3\n"))
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "\n\n"))


def test_nan_policy(tmp_path):
    p = write(tmp_path, "1,2\nnan,4\n5,nan\n")
    with pytest.raises(ParseError):
        load_csv(p)
    np.testing.assert_array_equal(load_csv(p, nan_policy="ffill").values, [[1, 2], [1, 4], [5, 4]])
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "nan,1\n2,3\n", "lead.csv"), nan_policy="ffill")


def enumerate_windows(T, P, reach, offsets, fractions):
    lo_v = int(round(T * fractions[0]))
    lo_t = int(round(T * (fractions[0] + fractions[1])))
    bounds = {"train": (0, lo_v), "valid": (lo_v, lo_t), "test": (lo_t, T)}
    counts = {k: 0 for k in bounds}
    for start in range(T):
        targets = [start + P + o for o in offsets]
        if start + P + reach > T:
            continue
        for name, (lo, hi) in bounds.items():
            if all(lo <= r < hi for r in targets):
                counts[name] += 1
    return counts


def test_window_counts_small_example():
    ds = make_windows(np.arange(20.0).reshape(10, 2), 3, 1, "single", 1, splits=(0.6, 0.2, 0.2))
    counts = {k: hi - lo for k, (lo, hi) in ds.splits.items()}
    assert counts == {"train": 3, "valid": 2, "test": 2}
    assert counts == enumerate_windows(10, 3, 1, [0], (0.6, 0.2, 0.2))


@settings(max_examples=60, deadline=None)
@given(st.integers(8, 60), st.integers(1, 5), st.integers(1, 4), st.sampled_from(["single", "multi"]))
def test_window_counts_match_enumeration(T, P, Q, mode):
    if P + Q > T:
        return
    ds = make_windows(np.random.default_rng(T).normal(size=(T, 2)), P, Q, mode, splits=(0.7, 0.2, 0.1))
    offsets = [Q - 1] if mode == "single" else list(range(Q))
    counts = {k: hi - lo for k, (lo, hi) in ds.splits.items()}
    assert counts == enumerate_windows(T, P, Q, offsets, (0.7, 0.2, 0.1))
    # every target row sits inside the split its sample belongs to
    for name, (lo, hi) in ds.splits.items():
        rlo, rhi = ds.row_bounds[name]
        rows = ds.target_rows[lo:hi]
        assert np.all((rows >= rlo) & (rows < rhi))


def test_multi_step_alignment(rng):
    raw = rng.normal(size=(50, 3))
    ds = make_windows(raw, 5, 4, "multi")
    scaled = ds.normalizer.transform(raw)
    for s in range(len(ds.X)):
        start = int(ds.target_rows[s, 0]) - 5
        np.testing.assert_array_equal(ds.X[s, :, :, 0], scaled[start:start + 5])
        np.testing.assert_array_equal(ds.Y[s, 0], scaled[start + 5])


def test_single_step_horizon_offset(rng):
    raw = rng.normal(size=(40, 2))
    ds = make_windows(raw, 6, 1, "single", horizon=3)
    # first window covers rows 0..5, its target is 3 steps later
    assert ds.target_rows[0, 0] == 8
    assert np.all(np.diff(ds.target_rows[:, 0]) == 1)
    np.testing.assert_allclose(ds.denormalize(ds.Y[0]), raw[ds.target_rows[0]])


def test_constant_series():
    ds = make_windows(np.full((30, 2), 4.0), 4, 1, "single")
    assert np.all(ds.X == 0.0)
    np.testing.assert_array_equal(ds.denormalize(ds.Y), 4.0)


def test_metr_la_shaped_windows(rng):
    ds = make_windows(rng.normal(size=(100, 207)), 12, 12, "multi", aux_time_of_day=True)
    assert ds.X.shape[1:] == (12, 207, 2) and ds.Y.shape[1:] == (12, 207)
    assert np.all((ds.X[..., 1] >= 0) & (ds.X[..., 1] < 1))


def test_time_of_day_channel():
    ds = make_windows(np.zeros((20, 1)), 3, 1, "multi", aux_time_of_day=True, steps_per_day=4, splits=(1, 0, 0))
    np.testing.assert_allclose(ds.X[0, :, 0, 1], [0, 0.25, 0.5])
    np.testing.assert_allclose(ds.X[3, :, 0, 1], [0.75, 0, 0.25])


def test_too_short_series():
    with pytest.raises(LengthError):
        make_windows(np.zeros((5, 2)), 4, 2, "multi")


def test_bad_splits():
    with pytest.raises(ConfigError):
        split_bounds(10, (0.5, 0.2, 0.2))


def test_no_leakage_from_test_rows(rng):
    raw = rng.normal(size=(60, 3))
    a = make_windows(raw, 4, 1, "single")
    raw2 = raw.copy()
    raw2[-1] += 100.0
    b = make_windows(raw2, 4, 1, "single")
    np.testing.assert_array_equal(a.normalizer.mean, b.normalizer.mean)
    np.testing.assert_array_equal(a.normalizer.scale, b.normalizer.scale)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["zscore", "max"]))
def test_normalize_round_trip(seed, method):
    x = np.random.default_rng(seed).normal(5, 3, size=(30, 4))
    norm = Normalizer(method).fit(x[:20])
    np.testing.assert_allclose(norm.inverse_transform(norm.transform(x)), x, atol=1e-9)


def test_prefit_normalizer_is_used(rng):
    norm = Normalizer().fit(rng.normal(size=(10, 2)))
    ds = make_windows(rng.normal(size=(30, 2)), 3, 1, "single", normalizer=norm)
    assert ds.normalizer is norm
    with pytest.raises(ConfigError):
        make_windows(rng.normal(size=(30, 3)), 3, 1, "single", normalizer=norm)


@pytest.mark.skipif(not __import__("pathlib").Path("data/exchange_rate.txt").exists(),
                    reason="exchange-rate file not present")
def test_exchange_rate_shape():
    assert load_csv("data/exchange_rate.txt").shape == (7588, 8)
