"""Hyperband: successive halving over brackets of (config count, epochs)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scheduler import barrier_latency
from .space import SearchSpace, sample_configuration
from .trials import Objective, TrialResult, TunerSettings, TuningResult, best_trial, evaluate

_EPS = 1e-9


@dataclass(frozen=True)
class Bracket:
    s: int
    n: int
    r: float
    rungs: tuple[tuple[int, float], ...]  # (n_i, r_i)

    @property
    def total_resource(self) -> float:
        return sum(n * r for n, r in self.rungs)


def s_max_for(R: float, eta: float) -> int:
    return int(math.floor(math.log(R) / math.log(eta) + _EPS))


def hyperband_schedule(R: float, eta: float = 3.0) -> list[Bracket]:
    if R < 1 or eta <= 1:
        raise ValueError("need R >= 1 and eta > 1")
    s_max = s_max_for(R, eta)
    B = (s_max + 1) * R
    out = []
    for s in range(s_max, -1, -1):
        n = int(math.ceil(B / R * eta**s / (s + 1) - _EPS))
        r = R * eta ** (-s)
        rungs = tuple((int(math.floor(n * eta ** (-i) + _EPS)), r * eta**i) for i in range(s + 1))
        out.append(Bracket(s, n, r, rungs))
    return out


def top_k(configs: Sequence, losses: Sequence[float], k: int) -> list:
    """The k configs with smallest loss; ties go to the earlier-sampled config."""
    if len(configs) != len(losses):
        raise ValueError("configs and losses differ in length")
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > len(configs):
        raise ValueError(f"k={k} exceeds {len(configs)} configs")
    order = sorted(range(len(configs)), key=lambda i: (losses[i], i))
    return [configs[i] for i in order[:k]]


def _epochs(r: float) -> int:
    return max(1, int(round(r)))


def run_hyperband(space: SearchSpace, settings: TunerSettings, objective: Objective) -> TuningResult:
    """Brackets run most-aggressive first and are truncated so that at most
    ``max_training_jobs`` distinct configs are sampled. Promoted configs resume
    from the state their previous rung returned."""
    rng = np.random.default_rng(settings.seed)
    eta = settings.eta
    remaining = settings.max_training_jobs
    trials: list[TrialResult] = []
    groups: list[list[float]] = []
    for bracket in hyperband_schedule(settings.R, eta):
        if remaining <= 0:
            break
        n = min(bracket.n, remaining)
        remaining -= n
        configs = [sample_configuration(space, rng, strategy="hyperband", bracket=bracket.s) for _ in range(n)]
        states: list = [None] * n
        losses = [math.inf] * n
        active = list(range(n))
        for i in range(bracket.s + 1):
            resource = _epochs(bracket.r * eta**i)
            durations = []
            for idx in active:
                loss, state, dur = evaluate(objective, configs[idx], resource, states[idx])
                losses[idx], states[idx] = loss, state
                durations.append(dur)
                trials.append(
                    TrialResult(len(trials), configs[idx], "hyperband", bracket.s, i, resource, loss, dur)
                )
            groups.append(durations)
            alive = [idx for idx in active if math.isfinite(losses[idx])]
            k = min(int(math.floor(len(active) / eta + _EPS)), len(alive))
            if i == bracket.s or k == 0:
                break
            active = top_k(alive, [losses[idx] for idx in alive], k)
    best = best_trial(trials)
    return TuningResult(best.config, best.loss, trials, barrier_latency(groups, settings.max_parallel_jobs))
