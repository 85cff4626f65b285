"""ARIMA(p, d, q) fitted by the Hannan-Rissanen two-stage regression."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..quantiles import DEFAULT_TAUS, QuantileForecast, check_taus, gaussian_quantiles, repair_crossing


class ArimaError(ValueError):
    pass


@dataclass(frozen=True)
class ArimaSpec:
    p: int = 2
    d: int = 1
    q: int = 1

    def __post_init__(self):
        if min(self.p, self.d, self.q) < 0:
            raise ArimaError("ARIMA orders must be non-negative")
        if self.p + self.q < 1:
            raise ArimaError("need p + q >= 1")
        if self.d > 2:
            raise ArimaError("differencing order d must be <= 2")


def difference(series: Sequence[float], d: int) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if d < 0:
        raise ArimaError("d must be >= 0")
    if x.size <= d:
        raise ArimaError(f"series of length {x.size} too short to difference {d} times")
    return np.diff(x, n=d) if d else x.copy()


def inverse_difference(diffed: Sequence[float], heads: Sequence[float]) -> np.ndarray:
    """Undo ``len(heads)``-fold differencing.

    ``heads`` are the d original values immediately preceding the
    reconstructed span, so ``heads + result`` differenced d times gives back
    ``diffed``.
    """
    y = np.asarray(diffed, dtype=float)
    h = np.asarray(heads, dtype=float)
    d = h.size
    if d == 0:
        return y.copy()
    # last value of the j-th difference of the heads, j = 0..d-1
    lasts = [np.diff(h, n=j)[-1] for j in range(d)]
    for j in reversed(range(d)):
        y = lasts[j] + np.cumsum(y)
    return y


def pacf(series: Sequence[float], max_lag: int) -> np.ndarray:
    """Partial autocorrelations at lags 1..max_lag (Durbin-Levinson)."""
    x = np.asarray(series, dtype=float)
    if x.size <= max_lag + 1:
        raise ArimaError(f"series of length {x.size} too short for {max_lag} lags")
    x = x - x.mean()
    c0 = np.dot(x, x)
    if c0 == 0:
        raise ArimaError("PACF undefined for a constant series")
    acf = np.array([np.dot(x[: x.size - k], x[k:]) / c0 for k in range(max_lag + 1)])
    out = np.zeros(max_lag)
    phi = np.zeros(0)
    v = 1.0
    for k in range(1, max_lag + 1):
        a = (acf[k] - np.dot(phi, acf[k - 1 : 0 : -1])) / v
        phi = np.concatenate([phi - a * phi[::-1], [a]])
        v *= 1.0 - a * a
        out[k - 1] = a
    return out


@dataclass
class ArimaModel:
    spec: ArimaSpec
    intercept: float
    ar: np.ndarray
    ma: np.ndarray
    sigma: float
    heads: np.ndarray  # last d original values
    diffed_tail: np.ndarray  # last p values of the differenced series
    resid_tail: np.ndarray  # last q innovations

    def to_json(self) -> str:
        return json.dumps(
            {
                "spec": [self.spec.p, self.spec.d, self.spec.q],
                "intercept": self.intercept,
                "ar": list(map(float, self.ar)),
                "ma": list(map(float, self.ma)),
                "sigma": self.sigma,
                "heads": list(map(float, self.heads)),
                "diffed_tail": list(map(float, self.diffed_tail)),
                "resid_tail": list(map(float, self.resid_tail)),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ArimaModel":
        data = json.loads(text)
        return cls(
            ArimaSpec(*data["spec"]),
            data["intercept"],
            np.array(data["ar"]),
            np.array(data["ma"]),
            data["sigma"],
            np.array(data["heads"]),
            np.array(data["diffed_tail"]),
            np.array(data["resid_tail"]),
        )


def _lagged(y: np.ndarray, lags: int, rows: np.ndarray) -> np.ndarray:
    return np.column_stack([y[rows - i] for i in range(1, lags + 1)]) if lags else np.empty((rows.size, 0))


def _lstsq(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ArimaError("singular regression in ARMA fit; try a lower order")
    return np.linalg.lstsq(X, y, rcond=None)[0]


def make_invertible(ma: np.ndarray, min_modulus: float = 1.001) -> np.ndarray:
    """Reflect roots of 1 + sum theta_j z^j that lie inside the unit circle.

    The reflected polynomial has the same autocorrelations but gives a
    residual recursion that does not blow up.
    """
    ma = np.asarray(ma, dtype=float)
    if ma.size == 0 or not np.any(ma):
        return ma
    roots = np.roots(np.concatenate([ma[::-1], [1.0]]))
    if np.all(np.abs(roots) >= min_modulus):
        return ma
    mod = np.abs(roots)
    roots = np.where(mod < 1.0, 1.0 / np.conj(roots), roots)
    mod = np.abs(roots)
    roots = np.where(mod < min_modulus, roots * (min_modulus / np.maximum(mod, 1e-300)), roots)
    poly = np.array([1.0 + 0j])
    for r in roots:
        poly = np.convolve(poly, [1.0, -1.0 / r])
    return poly[1:].real


def arma_residuals(y: np.ndarray, c: float, ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
    p, q = ar.size, ma.size
    eps = np.zeros_like(y)
    for t in range(p, y.size):
        pred = c + sum(ar[i] * y[t - 1 - i] for i in range(p))
        pred += sum(ma[j] * eps[t - 1 - j] for j in range(q) if t - 1 - j >= 0)
        eps[t] = y[t] - pred
    return eps


def fit_arima(train: Sequence[float], spec: ArimaSpec = ArimaSpec()) -> ArimaModel:
    x = np.asarray(train, dtype=float)
    y = difference(x, spec.d)
    p, q = spec.p, spec.q
    n = y.size
    if n < 10 * (p + q):
        raise ArimaError(f"differenced length {n} < 10*(p+q) = {10 * (p + q)}")

    if q:
        # stage 1: long autoregression for innovation estimates
        m = min(max(p + q + 1, int(math.ceil(10 * math.log10(n)))), n // 3)
        rows = np.arange(m, n)
        X1 = np.column_stack([np.ones(rows.size), _lagged(y, m, rows)])
        beta1 = _lstsq(X1, y[rows])
        e = np.zeros(n)
        e[rows] = y[rows] - X1 @ beta1
        start = max(p, m + q)
    else:
        e = np.zeros(n)
        start = p

    # stage 2: regress on own lags and lagged innovations
    rows = np.arange(start, n)
    if rows.size <= 1 + p + q:
        raise ArimaError("not enough observations for the requested order")
    X2 = np.column_stack([np.ones(rows.size), _lagged(y, p, rows), _lagged(e, q, rows)])
    beta = _lstsq(X2, y[rows])
    c, ar, ma = float(beta[0]), beta[1 : 1 + p], make_invertible(beta[1 + p :])
    if p and np.any(np.abs(np.roots(np.concatenate([[1.0], -ar])[::-1])) <= 1.0):
        raise ArimaError("fitted AR part is not stationary; try a lower order")

    eps = arma_residuals(y, c, ar, ma)
    burn = max(p, q)
    dof = max(eps.size - burn - (1 + p + q), 1)
    sigma = float(np.sqrt(np.sum(eps[burn:] ** 2) / dof))
    return ArimaModel(
        spec=spec,
        intercept=c,
        ar=ar,
        ma=ma,
        sigma=sigma,
        heads=x[x.size - spec.d :] if spec.d else np.empty(0),
        diffed_tail=y[n - p :] if p else np.empty(0),
        resid_tail=eps[n - q :] if q else np.empty(0),
    )


def psi_weights(ar: np.ndarray, ma: np.ndarray, d: int, horizon: int) -> np.ndarray:
    """MA(infinity) weights of the integrated process, psi_0 .. psi_{horizon-1}."""
    phi = np.asarray(ar, dtype=float)
    # phi*(B) = phi(B) (1 - B)^d written as 1 - sum phi*_i B^i
    poly = np.concatenate([[1.0], -phi])
    for _ in range(d):
        poly = np.convolve(poly, [1.0, -1.0])
    phistar = -poly[1:]
    psi = np.zeros(horizon)
    psi[0] = 1.0
    for j in range(1, horizon):
        acc = ma[j - 1] if j - 1 < len(ma) else 0.0
        for i in range(1, min(j, phistar.size) + 1):
            acc += phistar[i - 1] * psi[j - i]
        psi[j] = acc
    return psi


def forecast_arima(
    model: ArimaModel, horizon: int, taus: Sequence[float] = DEFAULT_TAUS, item_id: str = ""
) -> QuantileForecast:
    taus = check_taus(taus)
    p, q = model.spec.p, model.spec.q
    ys = list(model.diffed_tail)
    es = list(model.resid_tail)
    out = []
    for _ in range(horizon):
        pred = model.intercept
        pred += sum(model.ar[i] * ys[-1 - i] for i in range(p))
        pred += sum(model.ma[j] * es[-1 - j] for j in range(q))
        out.append(pred)
        ys.append(pred)
        es.append(0.0)
    point = inverse_difference(out, model.heads)
    psi = psi_weights(model.ar, model.ma, model.spec.d, horizon)
    std = model.sigma * np.sqrt(np.cumsum(psi**2))
    matrix = repair_crossing(gaussian_quantiles(point, std, taus))
    return QuantileForecast(item_id, taus, matrix)
