"""Simulated parallel execution: cost is total compute, latency is makespan."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class Schedule:
    starts: tuple[float, ...]
    ends: tuple[float, ...]
    workers: tuple[int, ...]
    cost: float
    latency: float

    @property
    def max_in_flight(self) -> int:
        events = sorted([(s, 1) for s in self.starts] + [(e, -1) for e in self.ends], key=lambda x: (x[0], x[1]))
        live = peak = 0
        for _, step in events:
            live += step
            peak = max(peak, live)
        return peak


def schedule_trials(durations: Sequence[float], max_parallel_jobs: int) -> Schedule:
    """Greedy list schedule: each trial, in order, goes to the earliest-free worker."""
    if max_parallel_jobs < 1:
        raise ValueError("max_parallel_jobs must be >= 1")
    if any(d < 0 for d in durations):
        raise ValueError("durations must be non-negative")
    free = [(0.0, w) for w in range(max_parallel_jobs)]
    starts, ends, workers = [], [], []
    for d in durations:
        t, w = heapq.heappop(free)
        starts.append(t)
        ends.append(t + d)
        workers.append(w)
        heapq.heappush(free, (t + d, w))
    return Schedule(
        tuple(starts),
        tuple(ends),
        tuple(workers),
        float(sum(durations)),
        float(max(ends, default=0.0)),
    )


def barrier_latency(groups: Sequence[Sequence[float]], max_parallel_jobs: int) -> float:
    """Latency of stages run back to back, each waiting for the previous one to finish."""
    return float(sum(schedule_trials(g, max_parallel_jobs).latency for g in groups))
