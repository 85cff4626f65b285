"""Multi-horizon quantile network: dilated causal conv encoder and a forked
decoder (global context branch, shared local quantile branch)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..quantiles import DEFAULT_TAUS, QuantileForecast, check_taus, repair_crossing
from ..timeseries import Dataset
from .layers import causal_conv_backward, causal_conv_forward, dense_backward, dense_forward
from .training import NeuralHyperparams, NeuralModel, run_sgd, time_features, window_scale

N_FEATURES = 3


@dataclass
class MqBatch:
    context: np.ndarray  # (B, L) scaled
    feats_ctx: np.ndarray  # (B, L, F)
    feats_fut: np.ndarray  # (B, K, F)
    future: np.ndarray | None = None  # (B, K) scaled targets


def init_mq_params(rng, horizon_k: int, hidden: int, n_taus: int) -> dict[str, np.ndarray]:
    H, K, F = hidden, horizon_k, N_FEATURES

    def w(*shape):
        return rng.normal(0.0, 1.0 / np.sqrt(shape[-2]), size=shape)

    return {
        "conv1_W": w(2, 1 + F, H),
        "conv1_b": np.zeros(H),
        "conv2_W": w(2, H, H),
        "conv2_b": np.zeros(H),
        "glob_W": w(2 * H + K * F, (K + 1) * H),
        "glob_b": np.zeros((K + 1) * H),
        "loc1_W": w(2 * H + F, H),
        "loc1_b": np.zeros(H),
        "loc2_W": w(H, n_taus) * 0.1,
        "loc2_b": np.ones(n_taus),  # scaled series hover around 1
    }


def mq_forward(params, batch: MqBatch):
    B, L = batch.context.shape
    K = batch.feats_fut.shape[1]
    H = params["conv1_b"].size
    x = np.concatenate([batch.context[..., None], batch.feats_ctx], axis=-1)
    a1, c1 = causal_conv_forward(x, params["conv1_W"], params["conv1_b"], 1)
    h1 = np.tanh(a1)
    a2, c2 = causal_conv_forward(h1, params["conv2_W"], params["conv2_b"], 2)
    h2 = np.tanh(a2)
    enc = np.concatenate([h2[:, -1], h2.mean(axis=1)], axis=-1)
    gin = np.concatenate([enc, batch.feats_fut.reshape(B, -1)], axis=-1)
    ag, cg = dense_forward(gin, params["glob_W"], params["glob_b"])
    gout = np.tanh(ag).reshape(B, K + 1, H)
    ck, ca = gout[:, :K], gout[:, K]
    lin = np.concatenate([ck, np.broadcast_to(ca[:, None], (B, K, H)), batch.feats_fut], axis=-1)
    al, cl1 = dense_forward(lin, params["loc1_W"], params["loc1_b"])
    hl = np.tanh(al)
    yq, cl2 = dense_forward(hl, params["loc2_W"], params["loc2_b"])
    cache = (c1, h1, c2, h2, L, cg, gout, cl1, hl, cl2)
    return yq, cache


def mq_loss_and_grad(params, batch: MqBatch, taus: Sequence[float]):
    """Mean pinball loss over (batch, horizon, quantile) and its gradient."""
    taus = np.asarray(taus, dtype=float)
    yq, cache = mq_forward(params, batch)
    c1, h1, c2, h2, L, cg, gout, cl1, hl, cl2 = cache
    B, K, Q = yq.shape
    H = h2.shape[-1]
    diff = batch.future[..., None] - yq
    loss = float(np.mean(np.maximum(taus * diff, (taus - 1.0) * diff)))
    dyq = np.where(diff > 0, -taus, np.where(diff < 0, 1.0 - taus, 0.0)) / (B * K * Q)

    g = {}
    dhl, g["loc2_W"], g["loc2_b"] = dense_backward(dyq, cl2, params["loc2_W"])
    dal = dhl * (1.0 - hl * hl)
    dlin, g["loc1_W"], g["loc1_b"] = dense_backward(dal, cl1, params["loc1_W"])
    dgout = np.concatenate([dlin[..., :H], dlin[..., H : 2 * H].sum(axis=1, keepdims=True)], axis=1)
    dag = (dgout * (1.0 - gout * gout)).reshape(B, -1)
    dgin, g["glob_W"], g["glob_b"] = dense_backward(dag, cg, params["glob_W"])
    dh2 = np.repeat(dgin[:, None, H : 2 * H] / L, L, axis=1)
    dh2[:, -1] += dgin[:, :H]
    da2 = dh2 * (1.0 - h2 * h2)
    dh1, g["conv2_W"], g["conv2_b"] = causal_conv_backward(da2, c2, params["conv2_W"])
    da1 = dh1 * (1.0 - h1 * h1)
    _, g["conv1_W"], g["conv1_b"] = causal_conv_backward(da1, c1, params["conv1_W"])
    return loss, g


def _build_batch(model: NeuralModel, series, item, start, with_target=True):
    L, K = model.context_length, model.horizon_k
    win = np.stack([series[i][s : s + L + K] for i, s in zip(item, start)])
    context = win[:, :L]
    scale = window_scale(context)
    pos = start[:, None] + np.arange(L + K)[None, :]
    feats = time_features(pos, start + L - 1, K, model.seasonality_m)
    return MqBatch(
        context / scale[:, None],
        feats[:, :L],
        feats[:, L:],
        win[:, L:] / scale[:, None] if with_target else None,
    )


class MqLiteModel(NeuralModel):
    def batch(self, series, item, start):
        return _build_batch(self, series, np.asarray(item), np.asarray(start))

    def loss_and_grad(self, params, batch):
        return mq_loss_and_grad(params, batch, self.taus)

    def forecast(self, values: np.ndarray, taus=None, item_id: str = "", **_) -> QuantileForecast:
        L, K = self.context_length, self.horizon_k
        z = np.asarray(values, dtype=float)
        if z.size < L:
            raise ValueError(f"need at least {L} observations to forecast, got {z.size}")
        context = z[None, z.size - L :]
        scale = window_scale(context)
        pos = np.arange(z.size - L, z.size + K)[None, :]
        feats = time_features(pos, np.array([z.size - 1]), K, self.seasonality_m)
        yq, _ = mq_forward(self.params, MqBatch(context / scale[:, None], feats[:, :L], feats[:, L:]))
        matrix = repair_crossing(yq[0].T * scale[0])
        full = QuantileForecast(item_id, self.taus, matrix)
        if taus is None:
            return full
        taus = check_taus(taus)
        return QuantileForecast(item_id, taus, repair_crossing(np.stack([full.quantile(t) for t in taus])))


def train_mq_lite(
    train: Dataset,
    hp: NeuralHyperparams = NeuralHyperparams(),
    resource_epochs: int | None = None,
    seed: int = 0,
    checkpoint: MqLiteModel | None = None,
    taus: Sequence[float] = DEFAULT_TAUS,
) -> MqLiteModel:
    """Train (or resume) until ``resource_epochs`` total epochs; the checkpoint is not modified."""
    target = hp.epochs if resource_epochs is None else int(resource_epochs)
    if checkpoint is not None:
        model = checkpoint.copy()
        if model.epochs_done > target:
            raise ValueError("checkpoint already trained beyond the requested budget")
    else:
        taus = check_taus(taus)
        hp.resolved_context(train.horizon_k)
        rng = np.random.default_rng(seed)
        model = MqLiteModel(
            kind="mq_lite",
            hp=hp,
            seed=seed,
            horizon_k=train.horizon_k,
            seasonality_m=train.seasonality_m,
            params=init_mq_params(rng, train.horizon_k, hp.hidden_size, len(taus)),
            taus=taus,
        )
    return run_sgd(model, train, target, MqLiteModel.batch, model.loss_and_grad)
