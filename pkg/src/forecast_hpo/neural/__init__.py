"""Global neural forecasters (MQ-lite, DeepAR-lite) with epoch-budget training."""

from __future__ import annotations

from typing import Sequence

from ..quantiles import DEFAULT_TAUS, QuantileForecast
from ..timeseries import TimeSeries
from .deeparlite import DeepArLiteModel, deepar_loss_and_grad, train_deepar_lite
from .layers import LstmCellParams, lstm_cell_step
from .mqlite import MqLiteModel, mq_loss_and_grad, train_mq_lite
from .training import (
    NeuralHyperparams,
    NeuralModel,
    TrainingError,
    load_checkpoint,
    save_checkpoint,
)

MODEL_CLASSES = {"mq_lite": MqLiteModel, "deepar_lite": DeepArLiteModel}
TRAINERS = {"mq_lite": train_mq_lite, "deepar_lite": train_deepar_lite}


def forecast_neural(
    model: NeuralModel,
    items: Sequence[TimeSeries],
    horizon_k: int | None = None,
    taus: Sequence[float] = DEFAULT_TAUS,
    n_samples: int = 200,
    seed: int = 0,
) -> list[QuantileForecast]:
    if horizon_k is not None and horizon_k != model.horizon_k:
        raise ValueError(f"model was trained for horizon {model.horizon_k}, not {horizon_k}")
    return [
        model.forecast(ts.values, taus=taus, item_id=ts.item_id, n_samples=n_samples, seed=seed)
        for ts in items
    ]


__all__ = [
    "DeepArLiteModel",
    "LstmCellParams",
    "MODEL_CLASSES",
    "MqLiteModel",
    "NeuralHyperparams",
    "NeuralModel",
    "TRAINERS",
    "TrainingError",
    "deepar_loss_and_grad",
    "forecast_neural",
    "load_checkpoint",
    "lstm_cell_step",
    "mq_loss_and_grad",
    "save_checkpoint",
    "train_deepar_lite",
    "train_mq_lite",
]
