"""Shared pieces of the neural forecasters: hyperparameters, window sampling,
the SGD loop and checkpoint files."""

from __future__ import annotations

import copy
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..timeseries import Dataset

CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """Raised when training diverges (non-finite loss)."""


@dataclass(frozen=True)
class NeuralHyperparams:
    learning_rate: float = 1e-3
    context_length: int | None = None  # None means horizon_k
    epochs: int = 10
    hidden_size: int = 32
    batch_size: int = 32
    batches_per_epoch: int = 8
    clip_norm: float = 5.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        for name in ("epochs", "hidden_size", "batch_size", "batches_per_epoch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.context_length is not None and self.context_length < 1:
            raise ValueError("context_length must be a positive integer")

    def resolved_context(self, horizon_k: int) -> int:
        L = horizon_k if self.context_length is None else int(self.context_length)
        if not horizon_k / 2 <= L <= 4 * horizon_k:
            raise ValueError(f"context_length {L} outside [{horizon_k / 2:g}, {4 * horizon_k}]")
        return L

    def replace(self, **changes) -> "NeuralHyperparams":
        return NeuralHyperparams(**{**asdict(self), **changes})


def time_features(positions, context_end, horizon_k: int, seasonality_m: int) -> np.ndarray:
    """(relative position, seasonal sin, seasonal cos) for absolute step indices."""
    p = np.asarray(positions, dtype=float)
    rel = (p - np.asarray(context_end, dtype=float)[..., None]) / horizon_k
    if seasonality_m > 1:
        arg = 2.0 * np.pi * p / seasonality_m
        s, c = np.sin(arg), np.cos(arg)
    else:
        s, c = np.zeros_like(p), np.zeros_like(p)
    s, c = np.broadcast_to(s, rel.shape), np.broadcast_to(c, rel.shape)
    return np.stack([rel, s, c], axis=-1)


def window_scale(context: np.ndarray) -> np.ndarray:
    s = np.mean(np.abs(context), axis=-1)
    return np.where(s > 0, s, 1.0)


def check_lengths(dataset: Dataset, needed: int) -> None:
    short = [ts.item_id for ts in dataset.items if len(ts.values) < needed]
    if short:
        raise ValueError(f"items shorter than context_length + horizon ({needed}): {short[:5]}")


def sample_windows(rng: np.random.Generator, lengths: np.ndarray, width: int, count: int):
    """Draw (item, start) pairs uniformly over all valid windows."""
    n_windows = lengths - width + 1
    item = rng.choice(lengths.size, size=count, p=n_windows / n_windows.sum())
    start = rng.integers(0, n_windows[item])
    return item, start


@dataclass
class NeuralModel:
    kind: str
    hp: NeuralHyperparams
    seed: int
    horizon_k: int
    seasonality_m: int
    params: dict[str, np.ndarray]
    taus: tuple[float, ...] = ()
    epochs_done: int = 0
    loss_history: list[float] = field(default_factory=list)

    @property
    def context_length(self) -> int:
        return self.hp.resolved_context(self.horizon_k)

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1] if self.loss_history else math.nan

    def copy(self) -> "NeuralModel":
        return copy.deepcopy(self)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


def run_sgd(
    model: NeuralModel,
    dataset: Dataset,
    target_epochs: int,
    make_batch: Callable,
    loss_and_grad: Callable,
) -> NeuralModel:
    """Train ``model`` in place until ``epochs_done == target_epochs``.

    Windows for epoch e are drawn from default_rng([seed, e]) so an interrupted
    run resumed from a checkpoint matches an uninterrupted one bit for bit.
    """
    L, K = model.context_length, model.horizon_k
    check_lengths(dataset, L + K)
    series = [np.asarray(ts.values, dtype=float) for ts in dataset.items]
    lengths = np.array([s.size for s in series])
    hp = model.hp
    for epoch in range(model.epochs_done, target_epochs):
        rng = np.random.default_rng([model.seed, epoch])
        losses = []
        for _ in range(hp.batches_per_epoch):
            item, start = sample_windows(rng, lengths, L + K, hp.batch_size)
            batch = make_batch(model, series, item, start)
            loss, grads = loss_and_grad(model.params, batch)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            clip_gradients(grads, hp.clip_norm)
            for name, g in grads.items():
                model.params[name] -= hp.learning_rate * g
            losses.append(loss)
        model.loss_history.append(float(np.mean(losses)))
        model.epochs_done = epoch + 1
    return model


def save_checkpoint(model: NeuralModel, path) -> tuple[Path, Path]:
    """Write the parameter blob (npz) plus a metadata JSON next to it."""
    path = Path(path)
    buf = io.BytesIO()
    np.savez(buf, __version__=np.array(CHECKPOINT_VERSION), **{f"p_{k}": v for k, v in model.params.items()})
    path.write_bytes(buf.getvalue())
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "hp": asdict(model.hp),
        "seed": model.seed,
        "horizon_k": model.horizon_k,
        "seasonality_m": model.seasonality_m,
        "taus": list(model.taus),
        "epochs_done": model.epochs_done,
        "loss_history": model.loss_history,
        "final_train_loss": model.final_loss,
    }
    meta_path = path.with_suffix(path.suffix + ".json")
    meta_path.write_text(json.dumps(meta, indent=2))
    return path, meta_path


def load_checkpoint(path) -> NeuralModel:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    with np.load(path) as blob:
        version = int(blob["__version__"])
        if version != CHECKPOINT_VERSION or meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        params = {k[2:]: blob[k].copy() for k in blob.files if k.startswith("p_")}
    from . import MODEL_CLASSES

    cls = MODEL_CLASSES[meta["kind"]]
    return cls(
        kind=meta["kind"],
        hp=NeuralHyperparams(**meta["hp"]),
        seed=meta["seed"],
        horizon_k=meta["horizon_k"],
        seasonality_m=meta["seasonality_m"],
        params=params,
        taus=tuple(meta["taus"]),
        epochs_done=meta["epochs_done"],
        loss_history=list(meta["loss_history"]),
    )
