"""Relative error measures and evaluation reports.

RMSPE and MAPE are percentages relative to the true values; SDE is the
population standard deviation of the raw errors. Reports carry the three
aggregates plus per-sample rows so prediction/error plots can be emitted
as plain CSV.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .validation import as_float_array


def _pair(y, y_hat, require_nonzero: bool) -> tuple[np.ndarray, np.ndarray]:
    y = as_float_array(y, name="y", ndim=1)
    y_hat = as_float_array(y_hat, name="y_hat", ndim=1)
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape[0]} vs {y_hat.shape[0]}")
    if require_nonzero and np.any(y == 0.0):
        raise ValueError("relative errors undefined: some true values are zero")
    return y, y_hat


def rmspe(y, y_hat) -> float:
    """Root mean square percentage error: sqrt(mean(((y-yhat)/y)^2))*100."""
    y, y_hat = _pair(y, y_hat, require_nonzero=True)
    return float(np.sqrt(np.mean(((y - y_hat) / y) ** 2)) * 100.0)


def mape(y, y_hat) -> float:
    """Mean absolute percentage error: mean(|y-yhat|/|y|)*100."""
    y, y_hat = _pair(y, y_hat, require_nonzero=True)
    return float(np.mean(np.abs(y - y_hat) / np.abs(y)) * 100.0)


def sde(y, y_hat) -> float:
    """Population standard deviation of the errors y - yhat."""
    y, y_hat = _pair(y, y_hat, require_nonzero=False)
    err = y - y_hat
    return float(np.sqrt(np.mean((err - err.mean()) ** 2)))


@dataclass
class MetricsReport:
    """Aggregate error measures plus per-sample rows for plotting."""
    rmspe_pct: float
    mape_pct: float
    sde_pct_points: float
    m: int
    rows: list[dict]  # cell, cycle, y, yhat, err

    def to_json(self, path: str | Path) -> None:
        payload = {
            "rmspe_pct": self.rmspe_pct,
            "mape_pct": self.mape_pct,
            "sde_pct_points": self.sde_pct_points,
            "m": self.m,
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def to_csv(self, path: str | Path) -> None:
        lines = ["cell,cycle,y,yhat,err"]
        for row in self.rows:
            lines.append(f"{row['cell']},{row['cycle']},"
                         f"{row['y']!r},{row['yhat']!r},{row['err']!r}")
        Path(path).write_text("\n".join(lines) + "\n")


def evaluate(model, x: np.ndarray, y: np.ndarray, cells: list[str],
             cycles: np.ndarray, scaler=None) -> MetricsReport:
    """Score eval-mode predictions over a test set.

    `model` is either ModelParameters or any callable mapping an
    (n, F, L) array to predictions; `scaler` (if given) is applied to the
    raw inputs first. Errors are reported in SOH percentage points.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        raise ConfigError("test set is empty")
    if scaler is not None:
        x = scaler.transform(x)
    if callable(model):
        y_hat = np.asarray(model(x), dtype=np.float64)
    else:
        from .model import predict
        y_hat = predict(model, x)
    y = np.asarray(y, dtype=np.float64)
    rows = [
        {"cell": cell, "cycle": int(cycle), "y": float(t), "yhat": float(p),
         "err": float(t - p)}
        for cell, cycle, t, p in zip(cells, cycles, y, y_hat)
    ]
    return MetricsReport(
        rmspe_pct=rmspe(y, y_hat),
        mape_pct=mape(y, y_hat),
        sde_pct_points=sde(y, y_hat) * 100.0,
        m=int(y.shape[0]),
        rows=rows)
