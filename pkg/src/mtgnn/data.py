"""Series ingestion, chronological splitting, windowing and normalization."""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, LengthError, ParseError

STD_EPS = 1e-8


@dataclass
class RawSeries:
    """``values`` is ``T x N``: one row per time step, one column per variable."""

    values: np.ndarray
    sample_rate: str = ""
    names: list = None

    @property
    def shape(self):
        return self.values.shape


def load_csv(path, delimiter=None, nan_policy="reject", skip_header=False):
    """Parse a rectangular numeric table.

    ``delimiter=None`` sniffs the first data line: comma if present, else
    whitespace. ``nan_policy`` is ``"reject"`` or ``"ffill"``.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    rows = []
    names = None
    width = None
    first = True
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if delimiter is None:
            delimiter = "," if "," in text else "ws"
        cells = text.split() if delimiter == "ws" else [c.strip() for c in text.split(delimiter)]
        if first and skip_header:
            names = cells
            first = False
            continue
        first = False
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(f"ragged row: expected {width} cells, found {len(cells)}", lineno)
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            bad = next(c for c in cells if not _is_float(c))
            raise ParseError(f"non-numeric cell {bad!r}", lineno) from None
    if not rows:
        raise ParseError(f"no data rows in {path}", 1)
    values = np.array(rows, dtype=np.float64)
    values = handle_missing(values, nan_policy)
    return RawSeries(values, names=names)


def _is_float(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def handle_missing(values, policy="reject"):
    bad = ~np.isfinite(values)
    if not bad.any():
        return values
    if policy == "reject":
        row = int(np.argwhere(bad)[0][0])
        raise ParseError(f"missing or non-finite value in data row {row + 1}")
    if policy != "ffill":
        raise ConfigError(f"unknown nan_policy {policy!r}")
    out = values.copy()
    for t in range(1, len(out)):
        hole = ~np.isfinite(out[t])
        out[t, hole] = out[t - 1, hole]
    if not np.isfinite(out).all():
        raise ParseError("leading missing values cannot be forward-filled")
    return out


class Normalizer:
    """Per-node scaling fitted on training rows.

    ``method="zscore"`` subtracts the mean and divides by the standard
    deviation; ``method="max"`` divides by the maximum absolute value.
    """

    def __init__(self, method="zscore"):
        if method not in ("zscore", "max"):
            raise ConfigError(f"unknown normalization {method!r}")
        self.method = method
        self.mean = None
        self.scale = None

    def fit(self, rows):
        rows = np.asarray(rows, dtype=np.float64)
        if self.method == "zscore":
            self.mean = rows.mean(axis=0)
            scale = rows.std(axis=0)
        else:
            self.mean = np.zeros(rows.shape[1])
            scale = np.abs(rows).max(axis=0)
        self.scale = np.where(scale < STD_EPS, 1.0, scale)
        return self

    def transform(self, x, node_axis=-1):
        return (x - _along(self.mean, x, node_axis)) / _along(self.scale, x, node_axis)

    def inverse_transform(self, x, node_axis=-1):
        return x * _along(self.scale, x, node_axis) + _along(self.mean, x, node_axis)


def _along(stat, x, axis):
    shape = [1] * np.ndim(x)
    shape[axis] = -1
    return stat.reshape(shape)


@dataclass
class WindowedDataset:
    """Aligned input/target windows.

    ``X`` is ``[S, P, N, D]`` (channel 0 normalized values, further channels
    auxiliary features) and ``Y`` is ``[S, Q, N]`` in normalized units.
    ``splits`` maps ``train``/``valid``/``test`` to sample index ranges and
    ``row_bounds`` to the raw row ranges they were cut from.
    """

    X: np.ndarray
    Y: np.ndarray
    splits: dict
    row_bounds: dict
    normalizer: Normalizer
    horizon_mode: str = "multi"
    horizon: int = 1
    target_rows: np.ndarray = field(default=None, repr=False)

    def split(self, name):
        lo, hi = self.splits[name]
        return self.X[lo:hi], self.Y[lo:hi]

    def denormalize(self, y):
        return self.normalizer.inverse_transform(y, node_axis=-1)

    @property
    def num_nodes(self):
        return self.X.shape[2]


def split_bounds(T, fractions):
    fractions = np.asarray(fractions, dtype=np.float64)
    if len(fractions) != 3 or (fractions < 0).any() or abs(fractions.sum() - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three non-negative numbers summing to 1, got {list(fractions)}")
    cuts = [0] + [int(round(T * f)) for f in np.cumsum(fractions)[:2]] + [T]
    return {name: (cuts[i], cuts[i + 1]) for i, name in enumerate(("train", "valid", "test"))}


def make_windows(raw, input_len, output_len, horizon_mode="multi", horizon=None,
                 splits=(0.7, 0.2, 0.1), aux_time_of_day=False, steps_per_day=288,
                 normalization="zscore", normalizer=None):
    """Cut a series into samples.

    In ``multi`` mode a window of ``input_len`` rows is paired with the next
    ``output_len`` rows. In ``single`` mode it is paired with the single row
    ``horizon`` steps after the window end (``horizon`` defaults to
    ``output_len``). A sample belongs to the split that contains all of its
    target rows; inputs may reach back into the preceding split.

    A fitted ``normalizer`` is used as is; otherwise one is fitted on the
    training rows.
    """
    values = raw.values if isinstance(raw, RawSeries) else np.asarray(raw, dtype=np.float64)
    if values.ndim != 2:
        raise ConfigError(f"series must be T x N, got shape {values.shape}")
    T, N = values.shape
    if horizon_mode not in ("single", "multi"):
        raise ConfigError(f"horizon_mode must be 'single' or 'multi', got {horizon_mode!r}")
    if horizon_mode == "single":
        horizon = output_len if horizon is None else horizon
        offsets = np.array([horizon - 1])
        reach = horizon
    else:
        horizon = 1
        offsets = np.arange(output_len)
        reach = output_len
    if input_len < 1 or reach < 1:
        raise ConfigError("input_len and the target reach must be positive")
    if input_len + reach > T:
        raise LengthError(f"series of {T} rows is too short for a {input_len}-step window "
                          f"and {reach}-step target reach")
    rows = split_bounds(T, splits)
    if normalizer is None:
        normalizer = Normalizer(normalization).fit(values[slice(*rows["train"])])
    elif normalizer.scale is None or len(normalizer.scale) != N:
        raise ConfigError(f"normalizer does not match a {N}-node series")
    scaled = normalizer.transform(values)

    starts = np.arange(T - input_len - reach + 1)
    first_target = starts + input_len + offsets[0]
    last_target = starts + input_len + offsets[-1]
    order = []
    sample_splits = {}
    for name, (lo, hi) in rows.items():
        keep = starts[(first_target >= lo) & (last_target < hi)]
        sample_splits[name] = (len(order), len(order) + len(keep))
        order.extend(keep.tolist())
    order = np.asarray(order, dtype=np.intp)

    in_idx = order[:, None] + np.arange(input_len)[None, :]
    tgt_idx = order[:, None] + input_len + offsets[None, :]
    X = scaled[in_idx][..., None]  # [S, P, N, 1]
    if aux_time_of_day:
        tod = (in_idx % steps_per_day) / steps_per_day
        X = np.concatenate([X, np.broadcast_to(tod[:, :, None, None], X.shape)], axis=-1)
    Y = scaled[tgt_idx]
    return WindowedDataset(X, Y, sample_splits, rows, normalizer, horizon_mode, horizon, tgt_idx)
