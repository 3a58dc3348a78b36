import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mtgnn import MTGNNForecaster
from mtgnn.exceptions import DimensionError
from mtgnn.synth import make_synthetic

SMALL = dict(input_len=8, layers=2, residual_channels=8, conv_channels=8, skip_channels=8, end_channels=16,
             embed_dim=4, top_k=3, epochs=2, batch_size=32, learning_rate=0.003, splits="0.7,0.15,0.15")


@pytest.fixture(scope="module")
def series():
    return make_synthetic(5, 6, 2, 0.1, length=400, seed=2)[0]


@pytest.fixture(scope="module")
def fitted(series):
    return MTGNNForecaster(**SMALL).fit(series)


def test_params_and_clone():
    est = MTGNNForecaster(**SMALL)
    assert est.get_params()["top_k"] == 3
    twin = clone(est).set_params(epochs=5)
    assert twin.epochs == 5 and est.epochs == 2


def test_not_fitted():
    with pytest.raises(NotFittedError):
        MTGNNForecaster().predict(np.zeros((1, 12, 3)))


def test_fit_predict_shapes(fitted, series):
    assert fitted.n_features_in_ == 5 and len(fitted.history_) == 2
    windows = np.stack([series[i:i + 8] for i in range(10)])
    assert fitted.predict(windows).shape == (10, 1, 5)
    assert fitted.forecast(series).shape == (1, 5)
    np.testing.assert_allclose(fitted.forecast(series, end=18)[None], fitted.predict(series[10:18][None]))


def test_predict_matches_dataset_pipeline(fitted, series):
    ds = fitted.dataset_
    X, Y = ds.split("test")
    raw = ds.normalizer.inverse_transform(X[..., 0])
    pred = fitted.predict(raw)
    assert fitted.evaluate(series, "test").mae == pytest.approx(np.abs(pred - ds.denormalize(Y)).mean())
    assert fitted.score(raw, ds.denormalize(Y)) == pytest.approx(-fitted.evaluate(series, "test").mae)


def test_bad_window_shape(fitted):
    with pytest.raises(DimensionError):
        fitted.predict(np.zeros((2, 7, 5)))
    with pytest.raises(ValueError):
        fitted.fit(np.array([[1.0, np.nan], [2.0, 3.0]]))


def test_adjacency(fitted):
    A = fitted.adjacency_.values
    assert A.shape == (5, 5) and np.all((A > 0).sum(1) <= 3) and np.all(A * A.T == 0)
    assert MTGNNForecaster(**SMALL, use_gc=False).fit(
        make_synthetic(5, 6, 2, 0.1, length=200, seed=1)[0]).adjacency_ is None


def test_save_load_round_trip(fitted, series, tmp_path):
    path = tmp_path / "m.ckpt"
    fitted.save(path)
    back = MTGNNForecaster.load(path)
    assert back.get_params() == fitted.get_params()
    np.testing.assert_array_equal(back.forecast(series), fitted.forecast(series))
    np.testing.assert_array_equal(back.adjacency_.values, fitted.adjacency_.values)
    back.save(tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_multi_step_with_time_of_day():
    series = make_synthetic(4, 4, 1, 0.1, length=300, seed=5)[0]
    est = MTGNNForecaster(**{**SMALL, "top_k": 2, "epochs": 1}, horizon_mode="multi", output_len=3,
                          aux_time_of_day=True, steps_per_day=24, curriculum_step=2).fit(series)
    assert est.config_.model.in_dim == 2
    assert est.forecast(series).shape == (3, 4)
    assert est.history_[-1]["r"] == 3
