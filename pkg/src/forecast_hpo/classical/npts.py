"""Non-parametric forecaster sampling past observations with exponential recency weights."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..quantiles import DEFAULT_TAUS, QuantileForecast, check_taus, empirical_quantiles


@dataclass(frozen=True)
class NptsSpec:
    lam: float = 0.05
    n_samples: int = 200

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("decay rate must be >= 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")


def npts_weights(t: int, lam: float) -> np.ndarray:
    """w_i proportional to exp(-lam * (t - i)) for i = 1..t, summing to one."""
    if t < 1:
        raise ValueError("history length must be >= 1")
    age = np.arange(t - 1, -1, -1, dtype=float)
    logw = -lam * age
    w = np.exp(logw - logw.max())
    return w / w.sum()


def kernel_density(history: Sequence[float], x: float, bandwidth: float, lam: float) -> float:
    """Kernel density estimate with K(u) = (lam / 2) exp(-lam |u|).

    The normaliser lam / 2 makes K integrate to one.
    """
    y = np.asarray(history, dtype=float)
    if bandwidth <= 0 or lam <= 0:
        raise ValueError("bandwidth and lam must be positive")
    u = (x - y) / bandwidth
    return float(np.sum(0.5 * lam * np.exp(-lam * np.abs(u))) / (y.size * bandwidth))


def sample_npts_paths(train: Sequence[float], horizon: int, spec: NptsSpec, seed: int) -> np.ndarray:
    z = np.asarray(train, dtype=float)
    if z.size == 0:
        raise ValueError("NPTS needs a non-empty history")
    rng = np.random.default_rng(seed)
    idx = rng.choice(z.size, size=(spec.n_samples, horizon), p=npts_weights(z.size, spec.lam))
    return z[idx]


def forecast_npts(
    train: Sequence[float],
    horizon: int,
    spec: NptsSpec = NptsSpec(),
    seed: int = 0,
    taus: Sequence[float] = DEFAULT_TAUS,
    item_id: str = "",
) -> QuantileForecast:
    taus = check_taus(taus)
    samples = sample_npts_paths(train, horizon, spec, seed)
    return QuantileForecast(item_id, taus, empirical_quantiles(samples, taus))
