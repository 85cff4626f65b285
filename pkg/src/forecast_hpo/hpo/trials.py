"""Trial records, tuner settings, the trial-log CSV and objective plumbing."""

from __future__ import annotations

import csv
import json
import math
import time
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, NamedTuple, Sequence

from .space import HyperparameterConfig

log = logging.getLogger(__name__)

STRATEGIES = ("hyperband", "bayesian", "random")
TRIAL_LOG_COLUMNS = ["trial_id", "strategy", "bracket", "rung", "config_json", "resource", "loss", "wall_time_s"]


class TuningError(RuntimeError):
    pass


@dataclass(frozen=True)
class TunerSettings:
    strategy: str = "hyperband"
    max_training_jobs: int = 15
    max_parallel_jobs: int = 5
    R: int = 27
    eta: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.max_training_jobs < 1 or self.max_parallel_jobs < 1:
            raise ValueError("job counts must be positive")
        if self.max_parallel_jobs > self.max_training_jobs:
            raise ValueError("max_parallel_jobs must not exceed max_training_jobs")
        if self.eta <= 1:
            raise ValueError("eta must be > 1")
        if self.R < 1:
            raise ValueError("R must be >= 1")

    @property
    def label(self) -> str:
        return f"{self.strategy}_{self.max_training_jobs};{self.max_parallel_jobs}"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TunerSettings":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class TrialResult:
    trial_id: int
    config: HyperparameterConfig
    strategy: str
    bracket: int | None
    rung: int | None
    resource: int
    loss: float
    wall_time_s: float

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.loss)

    @property
    def cost_s(self) -> float:
        return self.wall_time_s


class TrialOutcome(NamedTuple):
    """What an objective returns. ``duration_s`` overrides the measured time
    (lets tests and simulations use deterministic durations)."""

    loss: float
    state: Any = None
    duration_s: float | None = None


# objective(config values, total resource, state from the previous rung or None)
Objective = Callable[[dict, int, Any], "TrialOutcome | float"]


def evaluate(objective: Objective, config: HyperparameterConfig, resource: int, state=None):
    """Run one trial; failures and non-finite losses score +inf."""
    t0 = time.perf_counter()
    try:
        out = objective(dict(config.values), resource, state)
        if not isinstance(out, TrialOutcome):
            out = TrialOutcome(float(out))
        loss = float(out.loss)
        if not math.isfinite(loss):
            loss = math.inf
    except Exception as exc:  # trial failure must not abort the tuning job
        log.warning("trial failed for %s: %s", config.to_json(), exc)
        out, loss = TrialOutcome(math.inf), math.inf
    elapsed = time.perf_counter() - t0
    duration = elapsed if out.duration_s is None else float(out.duration_s)
    return loss, out.state, duration


@dataclass
class TuningResult:
    best_config: HyperparameterConfig
    best_loss: float
    trials: list[TrialResult]
    latency_s: float

    @property
    def cost_s(self) -> float:
        return float(sum(t.wall_time_s for t in self.trials))


def best_trial(trials: Sequence[TrialResult]) -> TrialResult:
    ok = [t for t in trials if not t.failed]
    if not ok:
        raise TuningError("no successful trial")
    return min(ok, key=lambda t: (t.loss, t.trial_id))


def _fmt_int(v):
    return "" if v is None else str(v)


def write_trial_log(path, trials: Sequence[TrialResult], *, include_timing: bool = True) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(TRIAL_LOG_COLUMNS)
        for t in trials:
            w.writerow(
                [
                    t.trial_id,
                    t.strategy,
                    _fmt_int(t.bracket),
                    _fmt_int(t.rung),
                    t.config.to_json(),
                    t.resource,
                    repr(t.loss),
                    f"{t.wall_time_s:.3f}" if include_timing else "",
                ]
            )


def read_trial_log(path) -> list[TrialResult]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRIAL_LOG_COLUMNS:
            raise ValueError(f"trial log header {reader.fieldnames} != {TRIAL_LOG_COLUMNS}")
        out = []
        for row in reader:
            out.append(
                TrialResult(
                    int(row["trial_id"]),
                    HyperparameterConfig(json.loads(row["config_json"])),
                    row["strategy"],
                    int(row["bracket"]) if row["bracket"] else None,
                    int(row["rung"]) if row["rung"] else None,
                    int(row["resource"]),
                    float(row["loss"]),
                    float(row["wall_time_s"]) if row["wall_time_s"] else 0.0,
                )
            )
    return out
