"""Curve-fitting forecaster: trend + Fourier seasonality + holiday effects.

A least-squares stand-in for Prophet. The piecewise linear trend uses
continuous hinge terms at fixed changepoints; the saturating trend is fit
on a coarse (growth rate, offset) grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..quantiles import DEFAULT_TAUS, QuantileForecast, check_taus, empirical_quantiles


class ProphetError(ValueError):
    pass


@dataclass(frozen=True)
class ProphetSpec:
    trend_kind: str = "linear_piecewise"
    n_changepoints: int = 10
    fourier_order: int = 3
    period: float = 7.0
    holidays: tuple[frozenset, ...] = ()
    capacity: float | Callable[[np.ndarray], np.ndarray] | None = None
    changepoints: tuple[float, ...] | None = None
    deltas: tuple[float, ...] | None = None  # logistic only: fixed rate adjustments
    changepoint_range: float = 0.8
    changepoint_ridge: float = 0.5
    n_samples: int = 200

    def __post_init__(self):
        if self.trend_kind not in ("linear_piecewise", "logistic"):
            raise ProphetError(f"unknown trend kind {self.trend_kind!r}")
        if self.n_changepoints < 0 or self.fourier_order < 0:
            raise ProphetError("changepoint count and Fourier order must be >= 0")
        if self.period <= 0:
            raise ProphetError("period must be positive")
        if self.trend_kind == "logistic" and self.capacity is None:
            raise ProphetError("logistic trend needs a capacity")
        object.__setattr__(self, "holidays", tuple(frozenset(h) for h in self.holidays))


def changepoint_locations(n: int, spec: ProphetSpec) -> np.ndarray:
    if spec.changepoints is not None:
        cps = np.sort(np.asarray(spec.changepoints, dtype=float))
    elif spec.n_changepoints == 0:
        cps = np.empty(0)
    else:
        hi = spec.changepoint_range * (n - 1)
        cps = np.linspace(0.0, hi, spec.n_changepoints + 2)[1:-1]
    if cps.size and (cps[0] <= 0 or cps[-1] >= n - 1):
        raise ProphetError("changepoints must lie strictly inside the training range")
    return cps


def fourier_features(t: np.ndarray, period: float, order: int) -> np.ndarray:
    cols = []
    for n in range(1, order + 1):
        arg = 2.0 * np.pi * n * t / period
        cols += [np.cos(arg), np.sin(arg)]
    return np.column_stack(cols) if cols else np.empty((t.size, 0))


def holiday_features(t: np.ndarray, holidays: Sequence[frozenset]) -> np.ndarray:
    if not holidays:
        return np.empty((t.size, 0))
    return np.column_stack([[float(int(round(x)) in h) for x in t] for h in holidays])


def logistic_trend(t, capacity, k: float, m: float, changepoints=(), deltas=()) -> np.ndarray:
    """Saturating growth with rate adjustments; offsets keep the curve continuous."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(changepoints, dtype=float)
    delta = np.asarray(deltas, dtype=float)
    gamma = np.zeros(s.size)
    for j in range(s.size):
        k_before = k + delta[:j].sum()
        k_after = k_before + delta[j]
        gamma[j] = (s[j] - m - gamma[:j].sum()) * (1.0 - k_before / k_after)
    a = (t[:, None] >= s[None, :]).astype(float) if s.size else np.zeros((t.size, 0))
    rate = k + a @ delta
    offset = m + a @ gamma
    cap = capacity(t) if callable(capacity) else np.full(t.size, float(capacity))
    return cap / (1.0 + np.exp(-rate * (t - offset)))


@dataclass
class ProphetModel:
    spec: ProphetSpec
    n_train: int
    changepoints: np.ndarray
    k: float  # base growth rate, raw time units
    m: float  # offset / intercept, raw units
    deltas: np.ndarray
    beta: np.ndarray  # Fourier coefficients
    kappa: np.ndarray  # holiday shifts
    residuals: np.ndarray = field(repr=False)

    def trend(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.spec.trend_kind == "logistic":
            return logistic_trend(t, self.spec.capacity, self.k, self.m, self.changepoints, self.deltas)
        hinge = np.maximum(t[:, None] - self.changepoints[None, :], 0.0) if self.changepoints.size else np.zeros((t.size, 0))
        return self.m + self.k * t + hinge @ self.deltas

    def seasonality(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return fourier_features(t, self.spec.period, self.spec.fourier_order) @ self.beta

    def holiday_effect(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return holiday_features(t, self.spec.holidays) @ self.kappa

    def predict(self, t) -> np.ndarray:
        return self.trend(t) + self.seasonality(t) + self.holiday_effect(t)


def _check_rank(X: np.ndarray) -> None:
    if X.shape[1] and np.linalg.matrix_rank(X) < X.shape[1]:
        raise ProphetError("rank-deficient design matrix (too many changepoints or Fourier terms for the data)")


def fit_prophet(train: Sequence[float], spec: ProphetSpec = ProphetSpec()) -> ProphetModel:
    y = np.asarray(train, dtype=float)
    n = y.size
    n_cp = len(spec.changepoints) if spec.changepoints is not None else spec.n_changepoints
    if spec.trend_kind == "logistic":
        n_cp = 0
    if n < 2 * (2 * spec.fourier_order + n_cp + 2):
        raise ProphetError(f"training length {n} too short for this specification")
    t = np.arange(n, dtype=float)
    T = max(n - 1, 1)
    y_scale = float(np.max(np.abs(y))) or 1.0
    ys = y / y_scale
    season = fourier_features(t, spec.period, spec.fourier_order)
    hol = holiday_features(t, spec.holidays)
    extra = np.column_stack([season, hol])

    if spec.trend_kind == "linear_piecewise":
        cps = changepoint_locations(n, spec)
        tau = t / T
        hinge = np.maximum(tau[:, None] - cps[None, :] / T, 0.0) if cps.size else np.empty((n, 0))
        X = np.column_stack([np.ones(n), tau, hinge, extra])
        _check_rank(X)
        if cps.size and spec.changepoint_ridge > 0:
            penalty = np.zeros((cps.size, X.shape[1]))
            penalty[:, 2 : 2 + cps.size] = np.sqrt(spec.changepoint_ridge) * np.eye(cps.size)
            X_fit, y_fit = np.vstack([X, penalty]), np.concatenate([ys, np.zeros(cps.size)])
        else:
            X_fit, y_fit = X, ys
        coef = np.linalg.lstsq(X_fit, y_fit, rcond=None)[0]
        m, k = coef[0] * y_scale, coef[1] * y_scale / T
        deltas = coef[2 : 2 + cps.size] * y_scale / T
        rest = coef[2 + cps.size :] * y_scale
    else:
        cps = np.asarray(spec.changepoints or (), dtype=float)
        deltas = np.asarray(spec.deltas if spec.deltas is not None else np.zeros(cps.size), dtype=float)
        if deltas.size != cps.size:
            raise ProphetError("need one rate adjustment per changepoint")
        _check_rank(extra)
        best = None
        for k_s in np.concatenate([-np.geomspace(0.5, 50, 20)[::-1], np.geomspace(0.5, 50, 20)]):
            for m_s in np.linspace(-0.5, 1.5, 41):
                g = logistic_trend(t, spec.capacity, k_s / T, m_s * T, cps, deltas)
                resid = y - g
                if extra.shape[1]:
                    c = np.linalg.lstsq(extra, resid, rcond=None)[0]
                    resid = resid - extra @ c
                else:
                    c = np.empty(0)
                sse = float(resid @ resid)
                if best is None or sse < best[0]:
                    best = (sse, k_s / T, m_s * T, c)
        _, k, m, rest = best

    nf = season.shape[1]
    model = ProphetModel(spec, n, cps, float(k), float(m), np.asarray(deltas, dtype=float), rest[:nf], rest[nf:], np.empty(0))
    model.residuals = y - model.predict(t)
    return model


def fit_forecast_prophet(
    train: Sequence[float],
    spec: ProphetSpec,
    horizon: int,
    taus: Sequence[float] = DEFAULT_TAUS,
    seed: int = 0,
    item_id: str = "",
) -> QuantileForecast:
    taus = check_taus(taus)
    model = fit_prophet(train, spec)
    future = np.arange(model.n_train, model.n_train + horizon, dtype=float)
    point = model.predict(future)
    rng = np.random.default_rng(seed)
    noise = rng.choice(model.residuals, size=(spec.n_samples, horizon))
    return QuantileForecast(item_id, taus, empirical_quantiles(point[None, :] + noise, taus))
