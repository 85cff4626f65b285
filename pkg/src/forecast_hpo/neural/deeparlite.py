"""Autoregressive LSTM with a Gaussian output head, trained on the NLL."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..quantiles import DEFAULT_TAUS, QuantileForecast, check_taus, empirical_quantiles
from ..timeseries import Dataset
from .layers import LstmCellParams, lstm_cell_backward, lstm_cell_forward, softplus, sigmoid
from .training import NeuralHyperparams, NeuralModel, run_sgd, time_features, window_scale

N_FEATURES = 3
SIGMA_FLOOR = 1e-3
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class ArBatch:
    inputs: np.ndarray  # (B, T, 1 + F): previous scaled value and features of the target step
    targets: np.ndarray  # (B, T) scaled


def init_deepar_params(rng, hidden: int) -> dict[str, np.ndarray]:
    D, H = 1 + N_FEATURES, hidden
    b = np.zeros(4 * H)
    b[:H] = 1.0  # forget gate starts open
    return {
        "lstm_W": rng.normal(0.0, 1.0 / np.sqrt(D + H), size=(D + H, 4 * H)),
        "lstm_b": b,
        "mu_W": rng.normal(0.0, 0.1, size=(H, 1)),
        "mu_b": np.zeros(1),
        "sigma_W": rng.normal(0.0, 0.1, size=(H, 1)),
        "sigma_b": np.zeros(1),
    }


def head(params, h):
    mu = (h @ params["mu_W"] + params["mu_b"])[..., 0]
    rho = (h @ params["sigma_W"] + params["sigma_b"])[..., 0]
    return mu, softplus(rho) + SIGMA_FLOOR, rho


def deepar_loss_and_grad(params, batch: ArBatch):
    """Mean Gaussian NLL over all (window, step) pairs with backprop through time."""
    cell = LstmCellParams(params["lstm_W"], params["lstm_b"])
    B, T, _ = batch.inputs.shape
    H = cell.hidden_size
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    caches, hs = [], []
    for t in range(T):
        h, c, cache = lstm_cell_forward(batch.inputs[:, t], h, c, cell)
        caches.append(cache)
        hs.append(h)
    hs = np.stack(hs, axis=1)
    mu, sigma, rho = head(params, hs)
    r = batch.targets - mu
    n = B * T
    loss = float(np.mean(np.log(sigma) + 0.5 * (r / sigma) ** 2) + _HALF_LOG_2PI)
    dmu = -r / sigma**2 / n
    drho = (1.0 / sigma - r * r / sigma**3) * sigmoid(rho) / n

    g = {}
    hs2 = hs.reshape(n, H)
    g["mu_W"] = hs2.T @ dmu.reshape(n, 1)
    g["mu_b"] = np.array([dmu.sum()])
    g["sigma_W"] = hs2.T @ drho.reshape(n, 1)
    g["sigma_b"] = np.array([drho.sum()])
    dhs = dmu[..., None] * params["mu_W"][:, 0] + drho[..., None] * params["sigma_W"][:, 0]
    g["lstm_W"] = np.zeros_like(params["lstm_W"])
    g["lstm_b"] = np.zeros_like(params["lstm_b"])
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(T)):
        _, dh_next, dc_next, dW, db = lstm_cell_backward(dhs[:, t] + dh_next, dc_next, caches[t], cell)
        g["lstm_W"] += dW
        g["lstm_b"] += db
    return loss, g


def _build_batch(model: NeuralModel, series, item, start):
    L, K = model.context_length, model.horizon_k
    win = np.stack([series[i][s : s + L + K] for i, s in zip(item, start)])
    scale = window_scale(win[:, :L])
    scaled = win / scale[:, None]
    pos = start[:, None] + np.arange(1, L + K)[None, :]
    feats = time_features(pos, start + L - 1, K, model.seasonality_m)
    inputs = np.concatenate([scaled[:, :-1, None], feats], axis=-1)
    return ArBatch(inputs, scaled[:, 1:])


class DeepArLiteModel(NeuralModel):
    def batch(self, series, item, start):
        return _build_batch(self, series, np.asarray(item), np.asarray(start))

    def loss_and_grad(self, params, batch):
        return deepar_loss_and_grad(params, batch)

    def sample_paths(self, values, n_samples: int, seed: int, sigma_override: float | None = None) -> np.ndarray:
        """Ancestral sample paths (n_samples, K) on the original scale."""
        L, K = self.context_length, self.horizon_k
        z = np.asarray(values, dtype=float)
        if z.size < L:
            raise ValueError(f"need at least {L} observations to forecast, got {z.size}")
        ctx = z[z.size - L :]
        scale = float(window_scale(ctx[None])[0])
        x = ctx / scale
        t0 = z.size - L
        cell = LstmCellParams(self.params["lstm_W"], self.params["lstm_b"])
        end = np.array([z.size - 1])
        pos = np.arange(t0 + 1, z.size + K)
        feats = time_features(pos[None], end, K, self.seasonality_m)[0]
        h = np.zeros((1, cell.hidden_size))
        c = np.zeros_like(h)
        # condition on the observed context
        for t in range(L - 1):
            inp = np.concatenate([[x[t]], feats[t]])[None]
            h, c, _ = lstm_cell_forward(inp, h, c, cell)
        h = np.repeat(h, n_samples, axis=0)
        c = np.repeat(c, n_samples, axis=0)
        prev = np.full(n_samples, x[-1])
        rng = np.random.default_rng(seed)
        out = np.empty((n_samples, K))
        for k in range(K):
            f = np.broadcast_to(feats[L - 1 + k], (n_samples, N_FEATURES))
            h, c, _ = lstm_cell_forward(np.column_stack([prev, f]), h, c, cell)
            mu, sigma, _ = head(self.params, h)
            if sigma_override is not None:
                sigma = np.full_like(mu, sigma_override)
            prev = mu + sigma * rng.standard_normal(n_samples)
            out[:, k] = prev
        return out * scale

    def forecast(
        self,
        values,
        taus=DEFAULT_TAUS,
        item_id: str = "",
        n_samples: int = 200,
        seed: int = 0,
        sigma_override: float | None = None,
    ) -> QuantileForecast:
        taus = check_taus(DEFAULT_TAUS if taus is None else taus)
        paths = self.sample_paths(values, n_samples, seed, sigma_override)
        return QuantileForecast(item_id, taus, empirical_quantiles(paths, taus))

    def mean_sigma(self, dataset: Dataset, n_windows: int = 64, seed: int = 0) -> float:
        """Average predicted scale over sampled training windows (diagnostic)."""
        series = [np.asarray(ts.values, dtype=float) for ts in dataset.items]
        lengths = np.array([s.size for s in series])
        from .training import sample_windows

        rng = np.random.default_rng(seed)
        item, start = sample_windows(rng, lengths, self.context_length + self.horizon_k, n_windows)
        batch = self.batch(series, item, start)
        cell = LstmCellParams(self.params["lstm_W"], self.params["lstm_b"])
        h = np.zeros((n_windows, cell.hidden_size))
        c = np.zeros_like(h)
        sig = []
        for t in range(batch.inputs.shape[1]):
            h, c, _ = lstm_cell_forward(batch.inputs[:, t], h, c, cell)
            sig.append(head(self.params, h)[1])
        return float(np.mean(sig))


def train_deepar_lite(
    train: Dataset,
    hp: NeuralHyperparams = NeuralHyperparams(),
    resource_epochs: int | None = None,
    seed: int = 0,
    checkpoint: DeepArLiteModel | None = None,
) -> DeepArLiteModel:
    target = hp.epochs if resource_epochs is None else int(resource_epochs)
    if checkpoint is not None:
        model = checkpoint.copy()
        if model.epochs_done > target:
            raise ValueError("checkpoint already trained beyond the requested budget")
    else:
        hp.resolved_context(train.horizon_k)
        model = DeepArLiteModel(
            kind="deepar_lite",
            hp=hp,
            seed=seed,
            horizon_k=train.horizon_k,
            seasonality_m=train.seasonality_m,
            params=init_deepar_params(np.random.default_rng(seed), hp.hidden_size),
        )
    return run_sgd(model, train, target, DeepArLiteModel.batch, model.loss_and_grad)
