"""Point and quantile accuracy metrics, Pearson correlation and representativity."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Mapping, Sequence

import numpy as np

from .quantiles import DEFAULT_TAUS, QuantileForecast, check_taus


class MetricError(ValueError):
    """Raised when a metric is undefined for its inputs."""


def _pair(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if a.shape != p.shape:
        raise MetricError(f"length mismatch: {a.size} actual vs {p.size} predicted")
    if a.size == 0:
        raise MetricError("empty series")
    return a, p


def eval_mape(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    zeros = np.flatnonzero(a == 0)
    if zeros.size:
        raise MetricError(f"MAPE undefined: actual is zero at index {int(zeros[0])}")
    return float(np.mean(np.abs((a - p) / a)))


def eval_mase(actual, predicted, train, m: int = 1) -> float:
    """MAE scaled by the in-sample MAE of the seasonal naive forecast."""
    a, p = _pair(actual, predicted)
    z = np.asarray(train, dtype=float).ravel()
    if m < 1:
        raise MetricError("seasonality m must be >= 1")
    if z.size <= m:
        raise MetricError(f"MASE needs a training series longer than m={m} (got {z.size})")
    scale = np.mean(np.abs(z[m:] - z[:-m]))
    if scale == 0:
        raise MetricError("MASE undefined: seasonal naive error on training series is zero")
    return float(np.mean(np.abs(a - p)) / scale)


def eval_wape(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    denom = np.sum(np.abs(a))
    if denom == 0:
        raise MetricError("WAPE undefined: actual values sum to zero")
    return float(np.sum(np.abs(a - p)) / denom)


def eval_wql(actual, quantile_pred, tau: float) -> float:
    if not 0.0 < tau < 1.0:
        raise MetricError(f"tau={tau} outside (0, 1)")
    a, q = _pair(actual, quantile_pred)
    denom = np.sum(np.abs(a))
    if denom == 0:
        raise MetricError("wQL undefined: actual values sum to zero")
    loss = tau * np.maximum(a - q, 0.0) + (1.0 - tau) * np.maximum(q - a, 0.0)
    return float(2.0 * np.sum(loss) / denom)


def eval_avg_wql(actual, quantile_preds: Mapping[float, Sequence[float]], taus: Sequence[float] | None = None) -> float:
    """Arithmetic mean of wQL over ``taus`` (defaults to every key of ``quantile_preds``)."""
    taus = list(quantile_preds) if taus is None else list(taus)
    if not taus:
        raise MetricError("avg-wQL needs at least one quantile level")
    return float(np.mean([eval_wql(actual, quantile_preds[t], t) for t in taus]))


def forecast_avg_wql(actual, forecast: QuantileForecast, taus: Sequence[float] | None = None) -> float:
    taus = forecast.taus if taus is None else check_taus(taus)
    return eval_avg_wql(actual, {t: forecast.quantile(t) for t in taus}, taus)


@dataclass(frozen=True)
class MetricReport:
    mape: float
    mase: float
    wape: float
    wql_10: float
    wql_50: float
    wql_90: float
    avg_wql: float

    def to_row(self, experiment: str = "", dataset: str = "", seed: int | str = "") -> dict[str, str]:
        row = {"experiment": experiment, "dataset": dataset, "seed": str(seed)}
        row.update({f.name: repr(float(getattr(self, f.name))) for f in fields(self)})
        return row

    @classmethod
    def from_row(cls, row: Mapping[str, str]) -> "MetricReport":
        return cls(**{f.name: float(row[f.name]) for f in fields(cls)})

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


METRIC_COLUMNS = ["experiment", "dataset", "seed"] + [f.name for f in fields(MetricReport)]


def evaluate_forecast(
    actual,
    forecast: QuantileForecast,
    train,
    m: int,
    taus: Sequence[float] = DEFAULT_TAUS,
) -> MetricReport:
    """All metrics for one item; point metrics use the median row.

    MAPE and MASE are reported as NaN when undefined for the item (zero
    actuals, constant training series); the quantile metrics still raise.
    """
    median = forecast.median()
    return MetricReport(
        mape=_or_nan(eval_mape, actual, median),
        mase=_or_nan(eval_mase, actual, median, train, m if len(train) > m else 1),
        wape=eval_wape(actual, median),
        wql_10=eval_wql(actual, forecast.quantile(0.1), 0.1),
        wql_50=eval_wql(actual, forecast.quantile(0.5), 0.5),
        wql_90=eval_wql(actual, forecast.quantile(0.9), 0.9),
        avg_wql=forecast_avg_wql(actual, forecast, taus),
    )


def _or_nan(fn, *args) -> float:
    try:
        return fn(*args)
    except MetricError:
        return math.nan


def average_reports(reports: Sequence[MetricReport]) -> MetricReport:
    """Unweighted mean over items."""
    if not reports:
        raise MetricError("no reports to average")
    return MetricReport(**{f.name: float(np.mean([getattr(r, f.name) for r in reports])) for f in fields(MetricReport)})


# --------------------------------------------------------------------------
# correlation analysis


@dataclass(frozen=True)
class CorrelationMatrix:
    labels: tuple[str, ...]
    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        if rho.shape != (len(self.labels), len(self.labels)):
            raise ValueError("correlation matrix shape does not match labels")
        rho.setflags(write=False)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "rho", rho)

    def __getitem__(self, pair: tuple[str, str]) -> float:
        i, j = (self.labels.index(p) for p in pair)
        return float(self.rho[i, j])


def pearson_matrix(observations: Mapping[str, Sequence[float]]) -> CorrelationMatrix:
    labels = list(observations)
    data = np.array([np.asarray(observations[k], dtype=float) for k in labels])
    if data.ndim != 2 or data.shape[1] < 2:
        raise MetricError("need at least two observations per metric, all of equal length")
    centered = data - data.mean(axis=1, keepdims=True)
    sigma = np.sqrt(np.mean(centered**2, axis=1))
    for label, s in zip(labels, sigma):
        if s == 0:
            raise MetricError(f"metric {label!r} has zero variance")
    cov = centered @ centered.T / data.shape[1]
    rho = np.clip(cov / np.outer(sigma, sigma), -1.0, 1.0)
    rho = 0.5 * (rho + rho.T)
    np.fill_diagonal(rho, 1.0)
    return CorrelationMatrix(tuple(labels), rho)


def representativity(c: CorrelationMatrix) -> dict[str, float]:
    """Mean correlation per column, diagonal included."""
    return {label: float(c.rho[:, j].mean()) for j, label in enumerate(c.labels)}
