"""Aggregation of experiment records, normalisation and the convex
error/latency trade-off between tuning configurations."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .pipeline import ExperimentRecord

DEFAULT_THETA_GRID = tuple(round(0.04 * i, 2) for i in range(40))  # 0.0 .. 1.56
_LABEL = re.compile(r"^(?P<strategy>.+?)_iter_(?P<jobs>\d+)(?:_par_(?P<par>\d+))?$")


def parse_label(label: str) -> tuple[str, int | None, int | None]:
    """'Hyperband_iter_15' -> ('Hyperband', 15, None); other labels pass through."""
    m = _LABEL.match(label)
    if not m:
        return label, None, None
    par = m.group("par")
    return m.group("strategy"), int(m.group("jobs")), int(par) if par else None


@dataclass(frozen=True)
class ConfigSummary:
    label: str
    mean_error: float
    std_error: float
    mean_hpo_latency_s: float
    std_latency: float
    n_runs: int
    # mean over datasets of the per-dataset means (alternative convention)
    dataset_mean_error: float
    dataset_mean_latency_s: float

    @property
    def strategy(self) -> str:
        return parse_label(self.label)[0]

    @property
    def jobs(self) -> int | None:
        return parse_label(self.label)[1]


def aggregate(records: Iterable[ExperimentRecord]) -> dict[str, ConfigSummary]:
    """Grand mean and population std over every successful run of each config.

    Failed runs (NaN error) are dropped. Order follows first appearance.
    """
    groups: dict[str, list[ExperimentRecord]] = {}
    for r in records:
        groups.setdefault(r.experiment, []).append(r)
    out = {}
    for label, rs in groups.items():
        ok = [r for r in rs if math.isfinite(r.error)]
        if not ok:
            raise ValueError(f"configuration {label!r} has no successful runs")
        err = np.array([r.error for r in ok])
        lat = np.array([r.hpo_latency_s for r in ok])
        by_ds: dict[str, list[ExperimentRecord]] = {}
        for r in ok:
            by_ds.setdefault(r.dataset, []).append(r)
        out[label] = ConfigSummary(
            label,
            float(err.mean()),
            float(err.std()),
            float(lat.mean()),
            float(lat.std()),
            len(ok),
            float(np.mean([np.mean([r.error for r in v]) for v in by_ds.values()])),
            float(np.mean([np.mean([r.hpo_latency_s for r in v]) for v in by_ds.values()])),
        )
    return out


def normalize(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("nothing to normalise")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ValueError("normalisation needs strictly positive finite values")
    return v / v.sum()


@dataclass(frozen=True)
class NormalizedTable:
    labels: tuple[str, ...]
    error: np.ndarray
    latency: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "error", np.asarray(self.error, dtype=float))
        object.__setattr__(self, "latency", np.asarray(self.latency, dtype=float))
        if not (len(self.labels) == self.error.size == self.latency.size):
            raise ValueError("labels, error and latency must have equal length")

    def index(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise KeyError(f"unknown configuration {label!r}; have {list(self.labels)}") from None

    @classmethod
    def from_summaries(
        cls, summaries: Mapping[str, ConfigSummary], labels: Sequence[str] | None = None, *, dataset_means=False
    ) -> "NormalizedTable":
        labels = list(summaries) if labels is None else list(labels)
        if dataset_means:
            err = [summaries[l].dataset_mean_error for l in labels]
            lat = [summaries[l].dataset_mean_latency_s for l in labels]
        else:
            err = [summaries[l].mean_error for l in labels]
            lat = [summaries[l].mean_hpo_latency_s for l in labels]
        return cls(tuple(labels), normalize(err), normalize(lat))

    def relabel(self, labels: Sequence[str]) -> "NormalizedTable":
        return NormalizedTable(tuple(labels), self.error, self.latency)


def strategy_table(summaries: Mapping[str, ConfigSummary], strategy: str, **kw) -> NormalizedTable:
    """Normalised table over one strategy's configs, ordered and labelled by job count."""
    picked = sorted((s.jobs, l) for l, s in summaries.items() if s.strategy == strategy and s.jobs is not None)
    if not picked:
        raise ValueError(f"no configurations for strategy {strategy!r}")
    table = NormalizedTable.from_summaries(summaries, [l for _, l in picked], **kw)
    return table.relabel([str(j) for j, _ in picked])


def tradeoff_cost(theta: float, table: NormalizedTable) -> np.ndarray:
    return theta * table.latency + (1.0 - theta) * table.error


def crossover_theta(table: NormalizedTable, config_a: str, config_b: str) -> float:
    """theta at which the two configs' cost lines meet."""
    a, b = table.index(config_a), table.index(config_b)
    slope = (table.latency[a] - table.error[a]) - (table.latency[b] - table.error[b])
    if slope == 0:
        raise ValueError(f"no crossover: cost lines of {config_a!r} and {config_b!r} are parallel")
    return float((table.error[b] - table.error[a]) / slope)


@dataclass(frozen=True)
class TradeoffGrid:
    thetas: tuple[float, ...]
    labels: tuple[str, ...]
    costs: np.ndarray  # (thetas, configs)

    @property
    def argmin(self) -> list[str]:
        return [self.labels[int(np.argmin(row))] for row in self.costs]

    def switch_points(self, table: NormalizedTable) -> list[dict]:
        """Exact crossovers wherever the grid winner changes."""
        out = []
        winners = self.argmin
        for i in range(1, len(winners)):
            if winners[i] != winners[i - 1]:
                out.append(
                    {
                        "from": winners[i - 1],
                        "to": winners[i],
                        "theta": crossover_theta(table, winners[i - 1], winners[i]),
                    }
                )
        return out

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", *self.labels, "argmin"])
            for theta, row, best in zip(self.thetas, self.costs, self.argmin):
                w.writerow([repr(float(theta)), *(repr(float(c)) for c in row), best])


def theta_sweep(table: NormalizedTable, theta_grid: Sequence[float] = DEFAULT_THETA_GRID) -> TradeoffGrid:
    thetas = tuple(float(t) for t in theta_grid)
    if not thetas:
        raise ValueError("theta grid is empty")
    costs = np.stack([tradeoff_cost(t, table) for t in thetas])
    return TradeoffGrid(thetas, table.labels, costs)


def parse_theta_grid(text: str) -> tuple[float, ...]:
    """'start:stop:step' (inclusive stop) or a comma list."""
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ValueError("theta step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    return tuple(float(x) for x in text.split(",") if x.strip())


def write_table6(path, table: NormalizedTable, alt: NormalizedTable | None = None) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["config", "error", "latency"]
        if alt is not None:
            header += ["error_dataset_means", "latency_dataset_means"]
        w.writerow(header)
        for i, label in enumerate(table.labels):
            row = [label, repr(float(table.error[i])), repr(float(table.latency[i]))]
            if alt is not None:
                row += [repr(float(alt.error[i])), repr(float(alt.latency[i]))]
            w.writerow(row)


def read_table6(path) -> NormalizedTable:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return NormalizedTable(
        tuple(r["config"] for r in rows),
        np.array([float(r["error"]) for r in rows]),
        np.array([float(r["latency"]) for r in rows]),
    )


def compare_strategies(records: Iterable[ExperimentRecord], strategy_a: str, strategy_b: str) -> dict:
    """Pairwise comparison of two strategies at matched job budgets.

    Relative deltas are (b - a) / b, so positive values mean ``strategy_a``
    is lower (faster or more accurate).
    """
    summaries = aggregate(records)

    def by_budget(strategy):
        out = {}
        for label, s in summaries.items():
            strat, jobs, par = parse_label(label)
            if strat == strategy and jobs is not None:
                out[(jobs, par)] = s
        return out

    A, B = by_budget(strategy_a), by_budget(strategy_b)
    keys = sorted(set(A) & set(B), key=lambda k: (k[0], k[1] or 0))
    if not keys:
        raise ValueError(f"no matched (jobs, parallel) pairs between {strategy_a!r} and {strategy_b!r}")
    pairs = []
    for k in keys:
        a, b = A[k], B[k]
        pairs.append(
            {
                "max_training_jobs": k[0],
                "max_parallel_jobs": k[1],
                "a_label": a.label,
                "b_label": b.label,
                "a_mean_error": a.mean_error,
                "b_mean_error": b.mean_error,
                "a_mean_hpo_latency_s": a.mean_hpo_latency_s,
                "b_mean_hpo_latency_s": b.mean_hpo_latency_s,
                "error_delta": b.mean_error - a.mean_error,
                "latency_delta_s": b.mean_hpo_latency_s - a.mean_hpo_latency_s,
                "relative_error_reduction": _rel(a.mean_error, b.mean_error),
                "relative_latency_reduction": _rel(a.mean_hpo_latency_s, b.mean_hpo_latency_s),
            }
        )
    lat_a = np.array([p["a_mean_hpo_latency_s"] for p in pairs])
    lat_b = np.array([p["b_mean_hpo_latency_s"] for p in pairs])
    return {
        "strategy_a": strategy_a,
        "strategy_b": strategy_b,
        "pairs": pairs,
        "mean_relative_error_reduction": float(np.mean([p["relative_error_reduction"] for p in pairs])),
        "mean_relative_latency_reduction": float(np.mean([p["relative_latency_reduction"] for p in pairs])),
        "a_lower_latency_in_all_pairs": bool(np.all(lat_a <= lat_b)),
        "latency_std_across_configs": {
            strategy_a: {"population": float(lat_a.std()), "sample": _sample_std(lat_a)},
            strategy_b: {"population": float(lat_b.std()), "sample": _sample_std(lat_b)},
        },
    }


def _rel(a: float, b: float) -> float:
    return 0.0 if a == b else float((b - a) / b)


def _sample_std(x: np.ndarray) -> float:
    return float(x.std(ddof=1)) if x.size > 1 else 0.0


def summaries_as_rows(summaries: Mapping[str, ConfigSummary]) -> list[dict]:
    return [asdict(s) for s in summaries.values()]
