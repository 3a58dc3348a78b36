"""Forecast error metrics on de-normalized values.

RSE and CORR follow the usual LSTNet definitions:

* RSE = ||pred - y||_2 / ||y - mean(y)||_2 over the whole tensor
* CORR = mean over variables of the Pearson correlation between the
  predicted and true series; variables where either series is constant are
  left out.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError

MAPE_EPS = 1e-8
FIELDS = ("mae", "rmse", "mape", "rse", "corr")


@dataclass
class MetricReport:
    mae: float
    rmse: float
    mape: float | None
    rse: float
    corr: float | None

    def as_dict(self):
        return {f: getattr(self, f) for f in FIELDS}

    @staticmethod
    def csv_header():
        return ",".join(FIELDS)

    def csv_line(self):
        return ",".join(_fmt(getattr(self, f)) for f in FIELDS)

    def table(self):
        return "\n".join(f"{f.upper():<5} {_fmt(getattr(self, f)):>14}" for f in FIELDS)


def _fmt(v):
    return "undefined" if v is None else f"{v:.6g}"


def metrics(pred, target):
    """Compute a :class:`MetricReport`; the last axis indexes variables."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.size == 0:
        raise DimensionError("cannot score an empty prediction")
    err = pred - target
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt((err ** 2).mean()))

    mask = np.abs(target) > MAPE_EPS
    mape = float(np.abs(err[mask] / target[mask]).mean()) if mask.any() else None

    num = np.sqrt((err ** 2).sum())
    den = np.sqrt(((target - target.mean()) ** 2).sum())
    if den > 0:
        rse = float(num / den)
    else:
        rse = 0.0 if num == 0 else float("inf")

    p = pred.reshape(-1, pred.shape[-1])
    y = target.reshape(-1, target.shape[-1])
    ps, ys = p.std(axis=0), y.std(axis=0)
    ok = (ps > 0) & (ys > 0)
    if ok.any():
        cov = ((p - p.mean(axis=0)) * (y - y.mean(axis=0))).mean(axis=0)
        corr = float((cov[ok] / (ps[ok] * ys[ok])).mean())
    else:
        corr = None
    return MetricReport(mae, rmse, mape, rse, corr)
