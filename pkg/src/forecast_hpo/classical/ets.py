"""Simple exponential smoothing with a grid-searched smoothing weight."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..quantiles import DEFAULT_TAUS, QuantileForecast, check_taus, gaussian_quantiles, repair_crossing

THETA_GRID = np.round(np.linspace(0.0, 1.0, 21), 2)


@dataclass(frozen=True)
class EtsModel:
    theta: float
    last_smoothed: float
    sigma: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta={self.theta} outside [0, 1]")


def smooth(series: Sequence[float], theta: float) -> tuple[np.ndarray, float]:
    """One-step predictions zhat_1..zhat_{n-1} and the next prediction zhat_n.

    The recursion starts from zhat_1 = z_0.
    """
    z = np.asarray(series, dtype=float)
    preds = np.empty(z.size - 1)
    level = z[0]
    for t in range(1, z.size):
        preds[t - 1] = level
        level = level + theta * (z[t] - level)
    return preds, float(level)


def fit_ets(train: Sequence[float], theta: float | None = None) -> EtsModel:
    z = np.asarray(train, dtype=float)
    if z.size < 2:
        raise ValueError("ETS needs at least two observations")
    grid = THETA_GRID if theta is None else [theta]
    best = None
    for th in grid:
        preds, level = smooth(z, float(th))
        sse = float(np.sum((z[1:] - preds) ** 2))
        if best is None or sse < best[0]:
            best = (sse, float(th), level)
    sse, th, level = best
    sigma = float(np.sqrt(sse / (z.size - 1)))
    return EtsModel(th, level, sigma)


def forecast_ets(model: EtsModel, horizon: int, taus: Sequence[float] = DEFAULT_TAUS, item_id: str = "") -> QuantileForecast:
    taus = check_taus(taus)
    point = np.full(horizon, model.last_smoothed)
    steps = np.arange(horizon)
    std = model.sigma * np.sqrt(1.0 + steps * model.theta**2)
    return QuantileForecast(item_id, taus, repair_crossing(gaussian_quantiles(point, std, taus)))


def fit_forecast_ets(
    train: Sequence[float],
    horizon: int,
    taus: Sequence[float] = DEFAULT_TAUS,
    *,
    theta: float | None = None,
    item_id: str = "",
) -> QuantileForecast:
    return forecast_ets(fit_ets(train, theta), horizon, taus, item_id)
