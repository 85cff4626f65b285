"""Gaussian-process surrogate with a squared-exponential kernel."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.stats import norm

LENGTH_GRID = (0.05, 0.1, 0.2, 0.5, 1.0)
NOISE_GRID = (1e-4, 1e-2)
SIGNAL_GRID = (0.5, 1.0, 2.0)
_JITTERS = (0.0, 1e-10, 1e-8, 1e-6)


class GpError(RuntimeError):
    pass


def se_kernel(A: np.ndarray, B: np.ndarray, ell: float, sf: float) -> np.ndarray:
    d2 = np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T
    return sf**2 * np.exp(-0.5 * np.maximum(d2, 0.0) / ell**2)


@dataclass
class GpModel:
    X: np.ndarray
    y: np.ndarray  # raw targets
    y_mean: float
    y_std: float
    ell: float
    sf: float
    sn: float
    chol: np.ndarray
    alpha: np.ndarray
    log_marginal: float

    def predict(self, Xs, standardized: bool = False):
        """Posterior mean and variance (of the latent function) at rows of Xs."""
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        Ks = se_kernel(Xs, self.X, self.ell, self.sf)
        mu = Ks @ self.alpha
        v = cho_solve((self.chol, True), Ks.T)
        var = np.maximum(self.sf**2 - np.sum(Ks * v.T, axis=1), 0.0)
        if standardized:
            return mu, var
        return self.y_mean + self.y_std * mu, var * self.y_std**2

    def posterior_cov(self, Xs) -> np.ndarray:
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        Ks = se_kernel(Xs, self.X, self.ell, self.sf)
        cov = se_kernel(Xs, Xs, self.ell, self.sf) - Ks @ cho_solve((self.chol, True), Ks.T)
        return cov * self.y_std**2


def _factor(X, ys, ell, sf, sn):
    K = se_kernel(X, X, ell, sf)
    n = X.shape[0]
    for jitter in _JITTERS:
        try:
            L = cholesky(K + (sn**2 + jitter) * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            continue
        alpha = cho_solve((L, True), ys)
        lml = -0.5 * ys @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
        return L, alpha, float(lml)
    raise GpError("covariance matrix not positive definite after jitter escalation")


def gp_fit(X, y, ell: float | None = None, sf: float | None = None, sn: float | None = None) -> GpModel:
    """Fit on unit-cube inputs; unspecified kernel settings are chosen by
    marginal likelihood over a fixed grid (first best wins on ties)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 1 or X.shape[0] != y.size:
        raise ValueError("need at least one observation and matching X, y")
    y_mean = float(y.mean())
    y_std = float(y.std())
    if not y_std > 0:
        y_std = 1.0
    ys = (y - y_mean) / y_std
    best = None
    grid = itertools.product(
        LENGTH_GRID if ell is None else (ell,),
        SIGNAL_GRID if sf is None else (sf,),
        NOISE_GRID if sn is None else (sn,),
    )
    for l_, f_, n_ in grid:
        L, alpha, lml = _factor(X, ys, l_, f_, n_)
        if best is None or lml > best[-1]:
            best = (l_, f_, n_, L, alpha, lml)
    l_, f_, n_, L, alpha, lml = best
    return GpModel(X, y, y_mean, y_std, l_, f_, n_, L, alpha, lml)


def expected_improvement(mu, sigma, best_loss):
    """EI for minimisation; zero where sigma is zero and mu >= best."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be >= 0")
    imp = best_loss - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(sigma > 0, imp / np.where(sigma > 0, sigma, 1.0), 0.0)
        ei = np.where(sigma > 0, imp * norm.cdf(u) + sigma * norm.pdf(u), np.maximum(imp, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei
