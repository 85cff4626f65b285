"""Quantile forecast container and quantile helpers shared by all models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

DEFAULT_TAUS: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(1, 10))


def check_taus(taus: Sequence[float]) -> tuple[float, ...]:
    taus = tuple(float(t) for t in taus)
    if not taus:
        raise ValueError("empty quantile set")
    for t in taus:
        if not 0.0 < t < 1.0:
            raise ValueError(f"quantile level {t} outside (0, 1)")
    if list(taus) != sorted(set(taus)):
        raise ValueError(f"quantile levels must be strictly increasing, got {taus}")
    return taus


def repair_crossing(matrix: np.ndarray) -> np.ndarray:
    """Sort each column so rows are non-decreasing in tau."""
    return np.sort(np.asarray(matrix, dtype=float), axis=0)


@dataclass(frozen=True)
class QuantileForecast:
    """Q x K matrix of predicted quantiles; rows follow ``taus``."""

    item_id: str
    taus: tuple[float, ...]
    matrix: np.ndarray

    def __post_init__(self):
        taus = check_taus(self.taus)
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != len(taus):
            raise ValueError(f"matrix shape {matrix.shape} does not match {len(taus)} quantiles")
        matrix.setflags(write=False)
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "matrix", matrix)

    @property
    def horizon(self) -> int:
        return self.matrix.shape[1]

    def quantile(self, tau: float) -> np.ndarray:
        """Row for ``tau``; linear interpolation between stored levels, clamped at the ends."""
        if tau in self.taus:
            return self.matrix[self.taus.index(tau)].copy()
        taus = np.asarray(self.taus)
        return np.array([np.interp(tau, taus, self.matrix[:, k]) for k in range(self.horizon)])

    def median(self) -> np.ndarray:
        return self.quantile(0.5)

    def restrict(self, taus: Sequence[float]) -> "QuantileForecast":
        taus = check_taus(taus)
        return QuantileForecast(self.item_id, taus, np.stack([self.quantile(t) for t in taus]))


def quantile_loss(actual, predicted, tau: float):
    """Pinball loss tau*max(z - q, 0) + (1 - tau)*max(q - z, 0), elementwise."""
    diff = np.asarray(actual, dtype=float) - np.asarray(predicted, dtype=float)
    out = tau * np.maximum(diff, 0.0) + (1.0 - tau) * np.maximum(-diff, 0.0)
    return float(out) if out.ndim == 0 else out


def gaussian_quantiles(mean: np.ndarray, std: np.ndarray, taus: Sequence[float]) -> np.ndarray:
    z = norm.ppf(np.asarray(taus, dtype=float))[:, None]
    return np.asarray(mean, dtype=float)[None, :] + z * np.asarray(std, dtype=float)[None, :]


def empirical_quantiles(samples: np.ndarray, taus: Sequence[float]) -> np.ndarray:
    """Per-step quantiles of an (n_samples, K) array."""
    return np.quantile(np.asarray(samples, dtype=float), np.asarray(taus, dtype=float), axis=0)
