"""Per-item ensemble selection governed by (local, global, combination) thresholds."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .metrics import eval_avg_wql, forecast_avg_wql
from .quantiles import QuantileForecast, check_taus, repair_crossing

Forecasts = Mapping[str, Mapping[str, QuantileForecast]]  # algorithm -> item -> forecast


@dataclass(frozen=True)
class ErrorMatrix:
    algorithms: tuple[str, ...]
    items: tuple[str, ...]
    values: np.ndarray  # (algorithms, items)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.algorithms), len(self.items)):
            raise ValueError(f"error matrix shape {v.shape} does not match labels")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("error matrix entries must be finite and non-negative")
        object.__setattr__(self, "values", v)

    @property
    def global_errors(self) -> np.ndarray:
        return self.values.mean(axis=1)

    def scaled(self, c: float) -> "ErrorMatrix":
        return ErrorMatrix(self.algorithms, self.items, self.values * c)


@dataclass(frozen=True)
class EnsembleParams:
    p_local: float = 0.0
    p_global: float = 0.0
    p_comb: float = 0.0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.p_local, self.p_global, self.p_comb])

    @classmethod
    def from_array(cls, x) -> "EnsembleParams":
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return cls(float(x[0]), float(x[1]), float(x[2]))


@dataclass(frozen=True)
class EnsembleAssignment:
    modes: Mapping[str, str]  # item -> "local" | "global"
    members: Mapping[str, tuple[str, ...]]

    def key(self) -> tuple:
        return tuple(sorted(self.members.items()))

    def to_dict(self) -> dict:
        return {item: {"mode": self.modes[item], "members": list(self.members[item])} for item in self.members}


def compute_error_matrix(
    forecasts: Forecasts, actuals: Mapping[str, Sequence[float]], taus: Sequence[float] | None = None
) -> ErrorMatrix:
    algorithms = tuple(forecasts)
    items = tuple(actuals)
    values = np.empty((len(algorithms), len(items)))
    for a, alg in enumerate(algorithms):
        for i, item in enumerate(items):
            fc = forecasts[alg].get(item)
            if fc is None:
                raise KeyError(f"missing forecast for algorithm {alg!r}, item {item!r}")
            values[a, i] = forecast_avg_wql(actuals[item], fc, taus)
    return ErrorMatrix(algorithms, items, values)


def select_members(errors: ErrorMatrix, params: EnsembleParams) -> EnsembleAssignment:
    v = errors.values
    g = errors.global_errors
    global_set = np.flatnonzero(g <= (1.0 + params.p_global) * g.min())
    modes, members = {}, {}
    for i, item in enumerate(errors.items):
        col = v[:, i]
        best = col.min()
        if best <= (1.0 - params.p_comb) * col[global_set].mean():
            modes[item] = "local"
            chosen = np.flatnonzero(col <= (1.0 + params.p_local) * best)
        else:
            modes[item] = "global"
            chosen = global_set
        members[item] = tuple(errors.algorithms[a] for a in chosen)
    return EnsembleAssignment(modes, members)


def ensemble_forecast(assignment: EnsembleAssignment, forecasts: Forecasts) -> dict[str, QuantileForecast]:
    out = {}
    for item, algs in assignment.members.items():
        parts = [forecasts[a][item] for a in algs]
        taus = parts[0].taus
        if any(p.taus != taus for p in parts):
            raise ValueError(f"item {item!r}: members disagree on quantile levels")
        matrix = np.mean([p.matrix for p in parts], axis=0)
        out[item] = QuantileForecast(item, taus, repair_crossing(matrix))
    return out


def pooled_avg_wql(
    actuals: Mapping[str, Sequence[float]], forecasts: Mapping[str, QuantileForecast], taus: Sequence[float] | None = None
) -> float:
    """avg-wQL over all items at once (losses and |z| summed across items)."""
    items = list(actuals)
    taus = forecasts[items[0]].taus if taus is None else check_taus(taus)
    z = np.concatenate([np.asarray(actuals[i], dtype=float) for i in items])
    preds = {t: np.concatenate([forecasts[i].quantile(t) for i in items]) for t in taus}
    return eval_avg_wql(z, preds, taus)


@dataclass
class HoppingResult:
    params: EnsembleParams
    value: float
    n_evals: int
    history: list[float] = field(default_factory=list)


def _coordinate_descent(f, x, fx, h0=0.1, h_min=1e-3, max_evals=200):
    h, evals = h0, 0
    while h >= h_min and evals < max_evals:
        moved = False
        for j in range(x.size):
            for sign in (1.0, -1.0):
                y = x.copy()
                y[j] = min(max(y[j] + sign * h, 0.0), 1.0)
                if y[j] == x[j]:
                    continue
                fy = f(y)
                evals += 1
                if fy < fx:
                    x, fx, moved = y, fy, True
                    break
        if not moved:
            h /= 2.0
    return x, fx, evals


def basin_hopping(
    objective: Callable[[EnsembleParams], float],
    iterations: int = 50,
    step_scale: float = 0.2,
    seed: int = 0,
    starts: Sequence[Sequence[float]] = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (0.5, 0.5, 0.5)),
) -> HoppingResult:
    """Gaussian hops clipped to the unit box, derivative-free local refinement,
    and monotone acceptance (a hop is kept only if it improves)."""
    rng = np.random.default_rng(seed)
    n = 0

    def f(x):
        nonlocal n
        n += 1
        return float(objective(EnsembleParams.from_array(x)))

    cands = [np.clip(np.asarray(s, dtype=float), 0.0, 1.0) for s in starts]
    vals = [f(c) for c in cands]
    k = int(np.argmin(vals))
    x, fx = _coordinate_descent(f, cands[k], vals[k])[:2]
    history = [fx]
    for _ in range(iterations):
        trial = np.clip(x + rng.normal(0.0, step_scale, size=3), 0.0, 1.0)
        y, fy, _ = _coordinate_descent(f, trial, f(trial))
        if fy < fx:
            x, fx = y, fy
        history.append(fx)
    return HoppingResult(EnsembleParams.from_array(x), fx, n, history)


@dataclass
class EnsembleFit:
    params: EnsembleParams
    assignment: EnsembleAssignment
    forecasts: dict[str, QuantileForecast]
    validation_avg_wql: float
    objective_evals: int
    # thresholds are tuned on the same window they are scored on
    warning: str = "ensemble parameters were selected on the validation window; its score is optimistic"

    def to_json(self) -> str:
        return json.dumps(
            {
                "params": asdict(self.params),
                "validation_avg_wql": self.validation_avg_wql,
                "assignment": self.assignment.to_dict(),
                "warning": self.warning,
            },
            indent=2,
            sort_keys=True,
        )


def fit_ensemble(
    test_errors: ErrorMatrix,
    final_forecasts: Forecasts,
    validation_actuals: Mapping[str, Sequence[float]],
    iterations: int = 50,
    step_scale: float = 0.2,
    seed: int = 0,
    taus: Sequence[float] | None = None,
) -> EnsembleFit:
    """Choose thresholds from test-window errors so that the induced ensemble of
    the final (retrained) models scores best on the validation window."""
    cache: dict[tuple, float] = {}

    def objective(p: EnsembleParams) -> float:
        assignment = select_members(test_errors, p)
        key = assignment.key()
        if key not in cache:
            fc = ensemble_forecast(assignment, final_forecasts)
            cache[key] = pooled_avg_wql(validation_actuals, fc, taus)
        return cache[key]

    hop = basin_hopping(objective, iterations, step_scale, seed)
    assignment = select_members(test_errors, hop.params)
    fc = ensemble_forecast(assignment, final_forecasts)
    score = pooled_avg_wql(validation_actuals, fc, taus)
    if not math.isclose(score, hop.value, rel_tol=0, abs_tol=1e-12):
        raise RuntimeError("ensemble objective is not reproducible")
    return EnsembleFit(hop.params, assignment, fc, score, hop.n_evals)
