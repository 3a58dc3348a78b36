"""scikit-learn style wrapper: ``fit`` on a raw ``T x N`` series, ``predict`` on windows."""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .checkpoint import load_checkpoint, save_checkpoint
from .config import KEY_SECTION, RunConfig, coerce
from .data import Normalizer, make_windows
from .exceptions import CheckpointError, ConfigError, DimensionError
from .metrics import metrics
from .model import MtgnnModel
from .training import predict, train

class MTGNNForecaster(BaseEstimator):
    """Graph-learning forecaster for multivariate series.

    ``fit(series)`` windows a ``T x N`` series, trains the network and keeps
    the best-validation parameters. ``predict(windows)`` maps raw-scale
    windows ``[S, P, N]`` (or ``[S, P, N, D]`` with auxiliary channels) to
    raw-scale forecasts ``[S, Q, N]``.

    In ``single`` horizon mode the forecast is the one value ``horizon``
    steps after the window; in ``multi`` mode it is the next ``output_len``
    steps.
    """

    def __init__(self, input_len=12, output_len=1, horizon_mode="single", horizon=1, layers=3,
                 residual_channels=32, conv_channels=32, skip_channels=64, end_channels=128,
                 dilation_rate=1, gcn_depth=2, retain_ratio=0.05, graph_mode="uni_directed",
                 top_k=20, saturation=3.0, embed_dim=40, dropout=0.3, pad_input=True,
                 use_gc=True, use_mixhop_selection=True, use_inception=True, use_curriculum=True,
                 learning_rate=0.001, l2_penalty=0.0001, grad_clip=5.0, batch_size=64, epochs=100,
                 curriculum_step=2500, split_size=1, splits="0.6,0.2,0.2", normalization="zscore",
                 aux_time_of_day=False, steps_per_day=288, random_state=0):
        self.input_len = input_len
        self.output_len = output_len
        self.horizon_mode = horizon_mode
        self.horizon = horizon
        self.layers = layers
        self.residual_channels = residual_channels
        self.conv_channels = conv_channels
        self.skip_channels = skip_channels
        self.end_channels = end_channels
        self.dilation_rate = dilation_rate
        self.gcn_depth = gcn_depth
        self.retain_ratio = retain_ratio
        self.graph_mode = graph_mode
        self.top_k = top_k
        self.saturation = saturation
        self.embed_dim = embed_dim
        self.dropout = dropout
        self.pad_input = pad_input
        self.use_gc = use_gc
        self.use_mixhop_selection = use_mixhop_selection
        self.use_inception = use_inception
        self.use_curriculum = use_curriculum
        self.learning_rate = learning_rate
        self.l2_penalty = l2_penalty
        self.grad_clip = grad_clip
        self.batch_size = batch_size
        self.epochs = epochs
        self.curriculum_step = curriculum_step
        self.split_size = split_size
        self.splits = splits
        self.normalization = normalization
        self.aux_time_of_day = aux_time_of_day
        self.steps_per_day = steps_per_day
        self.random_state = random_state

    # ------------------------------------------------------------ config

    def run_config(self):
        """The estimator parameters as a :class:`RunConfig`."""
        values = {k: v for k, v in self.get_params().items() if k in KEY_SECTION}
        if not isinstance(values["splits"], str):
            values["splits"] = ",".join(str(float(x)) for x in values["splits"])
        values["seed"] = int(self.random_state)
        return RunConfig.from_values(values)

    @classmethod
    def from_run_config(cls, rc):
        params = {k: v for k, v in rc.flat().items() if k in cls._get_param_names()}
        params["random_state"] = rc.train.seed
        est = cls(**params)
        # settings the caller fixed on purpose survive fit_to_data
        est._explicit = set(rc.explicit)
        return est

    # --------------------------------------------------------------- fit

    def fit(self, X, y=None, log_file=None, predefined_adjacency=None, progress=None):
        """Train on the raw series ``X`` (``T x N``); ``y`` is ignored."""
        series = check_array(X, dtype=np.float64, ensure_min_samples=2, ensure_min_features=1)
        rc = self.run_config()
        rc.explicit = set(getattr(self, "_explicit", ()))
        rc.fit_to_data(series.shape[1])
        d = rc.data
        dataset = make_windows(series, rc.model.input_len, rc.model.output_len, d.horizon_mode, d.horizon,
                               d.split_fractions, d.aux_time_of_day, d.steps_per_day, d.normalization)
        model = MtgnnModel(rc.model, predefined_adjacency=predefined_adjacency, seed=rc.train.seed)
        if log_file is not None:
            log_file.write(rc.echo())
        state = train(model, dataset, rc.train, log_file=log_file, progress=progress)
        self._set_fitted(rc, model, dataset.normalizer)
        self.history_ = state.history
        self.dataset_ = dataset
        return self

    def _set_fitted(self, rc, model, normalizer):
        self.config_ = rc
        self.model_ = model
        self.normalizer_ = normalizer
        self.n_features_in_ = rc.model.num_nodes

    # ----------------------------------------------------------- predict

    def _windows(self, X):
        c = self.config_.model
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 3:
            X = X[..., None]
        if X.ndim != 4 or X.shape[1:] != (c.input_len, c.num_nodes, c.in_dim):
            raise DimensionError(f"expected windows [S, {c.input_len}, {c.num_nodes}"
                                 f"{', ' + str(c.in_dim) if c.in_dim > 1 else ''}], got {X.shape}")
        if not np.isfinite(X).all():
            raise ValueError("windows contain NaN or infinite values")
        X = X.copy()
        X[..., 0] = self.normalizer_.transform(X[..., 0])
        return X

    def predict(self, X):
        """Raw-scale forecasts ``[S, Q, N]`` for raw-scale windows."""
        check_is_fitted(self, "model_")
        out = predict(self.model_, self._windows(X))
        return self.normalizer_.inverse_transform(out)

    def forecast(self, series, end=None):
        """Forecast from the ``input_len`` rows of ``series`` ending before row ``end``."""
        check_is_fitted(self, "model_")
        series = check_array(series, dtype=np.float64)
        c = self.config_.model
        end = len(series) if end is None else int(end)
        if end < c.input_len or end > len(series):
            raise ConfigError(f"need {c.input_len} rows before row {end}; series has {len(series)}")
        rows = np.arange(end - c.input_len, end)
        window = series[rows][None, :, :, None]
        if self.config_.data.aux_time_of_day:
            spd = self.config_.data.steps_per_day
            tod = np.broadcast_to(((rows % spd) / spd)[None, :, None, None], window.shape)
            window = np.concatenate([window, tod], axis=-1)
        return self.predict(window)[0]

    def score(self, X, y):
        """Negative MAE, so that larger is better."""
        return -metrics(self.predict(X), np.asarray(y, dtype=np.float64)).mae

    def evaluate(self, series, split="test"):
        """:class:`MetricReport` on one chronological split of ``series``."""
        check_is_fitted(self, "model_")
        ds = self.windows_for(series)
        X, Y = ds.split(split)
        if len(X) == 0:
            raise ConfigError(f"the {split} split of this series holds no complete window")
        pred = predict(self.model_, X)
        return metrics(ds.denormalize(pred), ds.denormalize(Y))

    def windows_for(self, series):
        """Window ``series`` with the fitted settings and normalization."""
        check_is_fitted(self, "model_")
        series = check_array(series, dtype=np.float64, ensure_min_samples=2)
        if series.shape[1] != self.n_features_in_:
            raise DimensionError(f"series has {series.shape[1]} columns, model expects {self.n_features_in_}")
        c, d = self.config_.model, self.config_.data
        return make_windows(series, c.input_len, c.output_len, d.horizon_mode, d.horizon, d.split_fractions,
                            d.aux_time_of_day, d.steps_per_day, d.normalization, normalizer=self.normalizer_)

    @property
    def adjacency_(self):
        """Learned global adjacency, or ``None`` without a static graph."""
        check_is_fitted(self, "model_")
        c = self.config_.model
        if not c.use_gc or c.graph_mode == "dynamic":
            return None
        return self.model_.graph.adjacency()

    # ---------------------------------------------------------- persist

    def save(self, path):
        check_is_fitted(self, "model_")
        blobs = {f"param.{k}": v for k, v in self.model_.state_dict().items()}
        blobs["norm.mean"] = self.normalizer_.mean
        blobs["norm.scale"] = self.normalizer_.scale
        adj = self.adjacency_
        if adj is not None:
            blobs["graph.adjacency"] = adj.values
        save_checkpoint(path, self.config_.flat(), blobs)

    @classmethod
    def load(cls, path):
        config, blobs = load_checkpoint(path)
        try:
            values = {k: coerce(k, v) for k, v in config.items()}
            rc = RunConfig.from_values(values)
            rc.model.validate()
        except (ConfigError, TypeError) as exc:
            raise CheckpointError(f"checkpoint {path} has an unusable config: {exc}") from exc
        predefined = blobs.get("param.graph.A_fixed")
        model = MtgnnModel(rc.model, predefined_adjacency=predefined, seed=rc.train.seed)
        state = {k[len("param."):]: v for k, v in blobs.items() if k.startswith("param.")}
        try:
            model.load_state_dict(state)
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"checkpoint {path} does not match its config: {exc}") from exc
        if "norm.mean" not in blobs or "norm.scale" not in blobs:
            raise CheckpointError(f"checkpoint {path} lacks normalization statistics")
        norm = Normalizer(rc.data.normalization)
        norm.mean, norm.scale = blobs["norm.mean"], blobs["norm.scale"]
        est = cls.from_run_config(rc)
        est._set_fitted(rc, model.eval(), norm)
        return est
