"""Batch Bayesian optimisation (GP + expected improvement) and random search."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize

from .gp import GpModel, expected_improvement, gp_fit
from .scheduler import barrier_latency, schedule_trials
from .space import HyperparameterConfig, SearchSpace, sample_configuration
from .trials import Objective, TrialResult, TunerSettings, TuningResult, best_trial, evaluate

N_CANDIDATES = 1024
N_REFINE = 5


def _gp_targets(losses: list[float]) -> np.ndarray:
    y = np.array(losses, dtype=float)
    finite = np.isfinite(y)
    if not finite.any():
        return np.zeros_like(y)
    y[~finite] = y[finite].max()  # failed trials look as bad as the worst success
    return y


def maximize_ei(gp: GpModel, best: float, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random multi-start search followed by L-BFGS-B polishing of the top candidates."""
    cand = rng.uniform(size=(N_CANDIDATES, dim))
    mu, var = gp.predict(cand)
    ei = expected_improvement(mu, np.sqrt(var), best)
    order = np.argsort(-ei, kind="stable")

    def neg_ei(x):
        m, v = gp.predict(x[None])
        return -float(expected_improvement(m[0], math.sqrt(v[0]), best))

    best_x, best_val = cand[order[0]], -ei[order[0]]
    for j in order[:N_REFINE]:
        res = minimize(neg_ei, cand[j], method="L-BFGS-B", bounds=[(0.0, 1.0)] * dim)
        if res.fun < best_val:
            best_x, best_val = np.clip(res.x, 0.0, 1.0), res.fun
    return best_x


def propose_batch(
    space: SearchSpace, X: list[np.ndarray], losses: list[float], size: int, rng: np.random.Generator, it: int
) -> list[HyperparameterConfig]:
    """Constant liar: each pending pick is imputed with the current best loss."""
    y = _gp_targets(losses)
    gp = gp_fit(np.array(X), y)
    best = float(y.min())
    Xb, yb = list(X), list(y)
    out = []
    for b in range(size):
        x = maximize_ei(gp, best, len(space.dimensions), rng)
        cfg = space.from_unit(x, strategy="bayesian", iteration=it)
        out.append(cfg)
        Xb.append(space.to_unit(cfg.values))
        yb.append(best)
        if b + 1 < size:
            gp = gp_fit(np.array(Xb), np.array(yb), gp.ell, gp.sf, gp.sn)
    return out


def run_bayesian(space: SearchSpace, settings: TunerSettings, objective: Objective) -> TuningResult:
    rng = np.random.default_rng(settings.seed)
    P, N, R = settings.max_parallel_jobs, settings.max_training_jobs, settings.R
    trials: list[TrialResult] = []
    X: list[np.ndarray] = []
    losses: list[float] = []
    groups = []
    batch = [sample_configuration(space, rng, strategy="bayesian", iteration=0) for _ in range(P)]
    it = 0
    while batch:
        durations = []
        for cfg in batch:
            loss, _, dur = evaluate(objective, cfg, R)
            trials.append(TrialResult(len(trials), cfg, "bayesian", None, it, R, loss, dur))
            X.append(space.to_unit(cfg.values))
            losses.append(loss)
            durations.append(dur)
        groups.append(durations)
        it += 1
        size = min(P, N - len(trials))
        batch = propose_batch(space, X, losses, size, rng, it) if size > 0 else []
    best = best_trial(trials)
    return TuningResult(best.config, best.loss, trials, barrier_latency(groups, P))


def run_random(space: SearchSpace, settings: TunerSettings, objective: Objective) -> TuningResult:
    rng = np.random.default_rng(settings.seed)
    trials: list[TrialResult] = []
    for _ in range(settings.max_training_jobs):
        cfg = sample_configuration(space, rng, strategy="random")
        loss, _, dur = evaluate(objective, cfg, settings.R)
        trials.append(TrialResult(len(trials), cfg, "random", None, None, settings.R, loss, dur))
    best = best_trial(trials)
    latency = schedule_trials([t.wall_time_s for t in trials], settings.max_parallel_jobs).latency
    return TuningResult(best.config, best.loss, trials, latency)
