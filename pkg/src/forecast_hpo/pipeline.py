"""Four-stage experiment: data preparation, tuning, ensemble selection and
final training, swept over seeds, with latency bookkeeping and persistence."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .classical import (
    ArimaError,
    ArimaSpec,
    NptsSpec,
    ProphetSpec,
    fit_arima,
    fit_forecast_ets,
    fit_forecast_prophet,
    forecast_arima,
    forecast_npts,
)
from .ensemble import ErrorMatrix, EnsembleFit, compute_error_matrix, fit_ensemble, pooled_avg_wql
from .hpo import SearchSpace, TrialOutcome, TunerSettings, TuningResult, tune, write_trial_log
from .hpo.space import Dimension
from .metrics import MetricReport, eval_avg_wql, eval_mape, eval_wape, eval_wql, evaluate_forecast
from .neural import TRAINERS, NeuralHyperparams, NeuralModel
from .quantiles import DEFAULT_TAUS, QuantileForecast, check_taus
from .timeseries import (
    Dataset,
    SplitSet,
    SyntheticSpec,
    generate_synthetic,
    load_manifest,
    split_three_way,
    tuning_split,
)

log = logging.getLogger(__name__)

CLASSICAL_MODELS = ("arima", "ets", "npts", "prophet")
NEURAL_MODELS = ("mq_lite", "deepar_lite")
ALL_MODELS = CLASSICAL_MODELS + NEURAL_MODELS
RECORD_COLUMNS = ["Experiment", "Dataset", "Version", "Error", "Pipeline", "HPO"]
N_SAMPLES = 100


def version_label(index: int) -> str:
    return "abcdefghijklmnopqrstuvwxyz"[index]


# --------------------------------------------------------------------------
# configuration and records


@dataclass(frozen=True)
class DatasetRef:
    manifest: str | None = None
    synthetic: SyntheticSpec | None = None
    data_seed: int = 0

    def __post_init__(self):
        if (self.manifest is None) == (self.synthetic is None):
            raise ValueError("dataset reference needs exactly one of 'manifest' or 'synthetic'")

    def load(self, base: Path | None = None) -> Dataset:
        if self.synthetic is not None:
            return generate_synthetic(self.synthetic, self.data_seed)
        path = Path(self.manifest)
        if base is not None and not path.is_absolute():
            path = base / path
        return load_manifest(path)

    @classmethod
    def from_dict(cls, d: Mapping) -> "DatasetRef":
        syn = d.get("synthetic")
        return cls(d.get("manifest"), SyntheticSpec.from_dict(syn) if syn is not None else None, int(d.get("seed", 0)))

    def to_dict(self) -> dict:
        if self.manifest is not None:
            return {"manifest": self.manifest}
        return {"synthetic": asdict(self.synthetic), "seed": self.data_seed}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dataset: DatasetRef
    use_hpo: bool = False
    tuner: TunerSettings | None = None
    seeds: tuple[int, ...] = (0, 1, 2)
    taus: tuple[float, ...] = DEFAULT_TAUS
    output_dir: str | None = None
    models: tuple[str, ...] = ALL_MODELS
    neural_epochs: int = 27
    hopping_iterations: int = 20
    lr_bounds: tuple[float, float] = (1e-4, 1e-1)

    def __post_init__(self):
        if self.use_hpo != (self.tuner is not None):
            raise ValueError("a tuner must be given exactly when use_hpo is true")
        unknown = set(self.models) - set(ALL_MODELS)
        if unknown:
            raise ValueError(f"unknown models {sorted(unknown)}; choose from {ALL_MODELS}")
        if not self.models:
            raise ValueError("at least one model is required")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "taus", check_taus(self.taus))
        object.__setattr__(self, "models", tuple(self.models))

    @property
    def neural_models(self) -> list[str]:
        return [m for m in self.models if m in NEURAL_MODELS]

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        d = dict(d)
        tuner = d.pop("tuner", None)
        out = d.pop("output_dir", None)
        return cls(
            name=d.pop("name"),
            dataset=DatasetRef.from_dict(d.pop("dataset")),
            tuner=TunerSettings(**tuner) if tuner else None,
            output_dir=out,
            **{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()},
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dataset": self.dataset.to_dict(),
            "use_hpo": self.use_hpo,
            "tuner": asdict(self.tuner) if self.tuner else None,
            "seeds": list(self.seeds),
            "taus": list(self.taus),
            "output_dir": self.output_dir,
            "models": list(self.models),
            "neural_epochs": self.neural_epochs,
            "hopping_iterations": self.hopping_iterations,
            "lr_bounds": list(self.lr_bounds),
        }


def load_configs(path) -> list[ExperimentConfig]:
    """A JSON file holding one config object or a list of them."""
    data = json.loads(Path(path).read_text())
    return [ExperimentConfig.from_dict(d) for d in (data if isinstance(data, list) else [data])]


@dataclass(frozen=True)
class ExperimentRecord:
    experiment: str
    dataset: str
    version: str
    error: float
    pipeline_latency_s: float
    hpo_latency_s: float
    failed_stage: str | None = None

    def row(self) -> list[str]:
        return [
            self.experiment,
            self.dataset,
            self.version,
            repr(float(self.error)),
            repr(float(self.pipeline_latency_s)),
            repr(float(self.hpo_latency_s)),
        ]


def write_records(path, records: Sequence[ExperimentRecord]) -> None:
    """Append records, writing the header when the file is new."""
    path = Path(path)
    if path.exists() and path.stat().st_size:
        _check_header(path)
        mode = "a"
    else:
        mode = "w"
    with path.open(mode, newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if mode == "w":
            w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow(r.row())


def _check_header(path: Path) -> None:
    with path.open(newline="") as fh:
        header = next(csv.reader(fh), [])
    if header != RECORD_COLUMNS:
        missing = [c for c in RECORD_COLUMNS if c not in header]
        extra = [c for c in header if c not in RECORD_COLUMNS]
        raise ValueError(
            f"{path}: record header mismatch (missing {missing}, unexpected {extra}, expected order {RECORD_COLUMNS})"
        )


def load_records(path) -> list[ExperimentRecord]:
    path = Path(path)
    _check_header(path)
    out = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(RECORD_COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected {len(RECORD_COLUMNS)} fields, got {len(row)}")
            try:
                out.append(ExperimentRecord(row[0], row[1], row[2], float(row[3]), float(row[4]), float(row[5])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


# --------------------------------------------------------------------------
# evaluation


def backtest(forecasts: Mapping[str, QuantileForecast], window: Dataset, train: Dataset | None = None) -> MetricReport:
    """Metrics over a whole window. Quantile and WAPE metrics pool all items;
    MASE is the mean of per-item values (it needs each item's own scale)."""
    actual = {ts.item_id: np.asarray(ts.values, dtype=float) for ts in window.items}
    for item, z in actual.items():
        if item not in forecasts:
            raise KeyError(f"no forecast for item {item!r}")
        if forecasts[item].horizon != z.size:
            raise ValueError(f"item {item!r}: forecast horizon {forecasts[item].horizon} != window length {z.size}")
    items = list(actual)
    z = np.concatenate([actual[i] for i in items])
    med = np.concatenate([forecasts[i].median() for i in items])
    taus = forecasts[items[0]].taus

    def q(t):
        return np.concatenate([forecasts[i].quantile(t) for i in items])

    mase = math.nan
    if train is not None:
        hist = {ts.item_id: ts.values for ts in train.items}
        vals = [
            evaluate_forecast(actual[i], forecasts[i], hist[i], window.seasonality_m, taus).mase for i in items
        ]
        vals = [v for v in vals if math.isfinite(v)]
        mase = float(np.mean(vals)) if vals else math.nan
    try:
        mape = eval_mape(z, med)
    except ValueError:
        mape = math.nan
    return MetricReport(
        mape=mape,
        mase=mase,
        wape=eval_wape(z, med),
        wql_10=eval_wql(z, q(0.1), 0.1),
        wql_50=eval_wql(z, q(0.5), 0.5),
        wql_90=eval_wql(z, q(0.9), 0.9),
        avg_wql=eval_avg_wql(z, {t: q(t) for t in taus}, taus),
    )


def actuals_of(window: Dataset) -> dict[str, np.ndarray]:
    return {ts.item_id: np.asarray(ts.values, dtype=float) for ts in window.items}


# --------------------------------------------------------------------------
# model fitting


def _arima_forecast(values, k, taus, item_id):
    for spec in (ArimaSpec(), ArimaSpec(1, 1, 0), ArimaSpec(1, 0, 0)):
        try:
            return forecast_arima(fit_arima(values, spec), k, taus, item_id)
        except ArimaError as exc:
            log.warning("ARIMA%s failed on %s (%s); trying a lower order", (spec.p, spec.d, spec.q), item_id, exc)
    raise ArimaError(f"no ARIMA order could be fit for item {item_id!r}")


def prophet_spec_for(n: int, m: int) -> ProphetSpec:
    # order must stay below m/2: sin(2*pi*(m/2)*t/m) vanishes at integer t
    order = min(3, (m - 1) // 2) if m > 1 else 0
    n_cp = max(0, min(10, n // 2 - 2 * order - 2))
    return ProphetSpec(n_changepoints=n_cp, fourier_order=order, period=float(max(m, 1)))


def classical_forecasts(name: str, history: Dataset, taus, seed: int) -> dict[str, QuantileForecast]:
    k, m = history.horizon_k, history.seasonality_m
    out = {}
    for ts in history.items:
        z = np.asarray(ts.values, dtype=float)
        if name == "arima":
            fc = _arima_forecast(z, k, taus, ts.item_id)
        elif name == "ets":
            fc = fit_forecast_ets(z, k, taus, item_id=ts.item_id)
        elif name == "npts":
            fc = forecast_npts(z, k, NptsSpec(), seed, taus, ts.item_id)
        elif name == "prophet":
            fc = fit_forecast_prophet(z, prophet_spec_for(z.size, m), k, taus, seed, ts.item_id)
        else:
            raise ValueError(f"unknown classical model {name!r}")
        out[ts.item_id] = fc
    return out


def neural_forecasts(model: NeuralModel, history: Dataset, taus, seed: int) -> dict[str, QuantileForecast]:
    return {
        ts.item_id: model.forecast(ts.values, taus=taus, item_id=ts.item_id, n_samples=N_SAMPLES, seed=seed)
        for ts in history.items
    }


def neural_search_space(tune_fit: Dataset, lr_bounds=(1e-4, 1e-1)) -> SearchSpace:
    k = tune_fit.horizon_k
    lo = math.ceil(k / 2)
    hi = min(4 * k, tune_fit.min_length() - k)
    if hi < lo:
        raise ValueError(f"tuning window too short for any context length in [{lo}, {4 * k}]")
    return SearchSpace(
        (
            Dimension("learning_rate", "log-uniform", lr_bounds[0], lr_bounds[1]),
            Dimension("context_length", "integer", lo, hi),
        )
    )


def tune_neural(
    model_name: str,
    train: Dataset,
    settings: TunerSettings,
    base_hp: NeuralHyperparams,
    seed: int,
    taus=DEFAULT_TAUS,
    lr_bounds=(1e-4, 1e-1),
) -> tuple[NeuralHyperparams, TuningResult]:
    """Tune learning rate and context length on the nested split of ``train``;
    the loss is avg-wQL on the held-out tail of the training window."""
    trainer = TRAINERS[model_name]
    tune_fit, tune_hold = tuning_split(train)
    for full, part in zip(train.items, tune_fit.items):
        # access guard: tuning never sees anything beyond the training window
        assert len(part) == len(full) - train.horizon_k, "tuning data leaks past the train window"
    hold = actuals_of(tune_hold)
    space = neural_search_space(tune_fit, lr_bounds)

    def objective(values, resource, state):
        hp = base_hp.replace(learning_rate=values["learning_rate"], context_length=int(values["context_length"]))
        model = trainer(tune_fit, hp, resource, seed, checkpoint=state)
        fc = neural_forecasts(model, tune_fit, taus, seed)
        return TrialOutcome(pooled_avg_wql(hold, fc, taus), model)

    result = tune(space, settings, objective)
    best = result.best_config.values
    hp = base_hp.replace(learning_rate=best["learning_rate"], context_length=int(best["context_length"]))
    return hp, result


# --------------------------------------------------------------------------
# experiment


@dataclass
class RunArtifacts:
    record: ExperimentRecord
    hyperparams: dict[str, dict] = field(default_factory=dict)
    tuning: dict[str, TuningResult] = field(default_factory=dict)
    test_errors: ErrorMatrix | None = None
    single_model_validation: dict[str, float] = field(default_factory=dict)
    ensemble: EnsembleFit | None = None
    stage_seconds: dict[str, float] = field(default_factory=dict)


class StageFailure(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def _fit_all(cfg, hps, history: Dataset, seed: int):
    """Forecasts for every model trained on ``history`` (horizon = next k steps)."""
    out = {}
    for name in cfg.models:
        if name in CLASSICAL_MODELS:
            out[name] = classical_forecasts(name, history, cfg.taus, seed)
        else:
            model = TRAINERS[name](history, hps[name], hps[name].epochs, seed)
            out[name] = neural_forecasts(model, history, cfg.taus, seed)
    return out


def run_once(cfg: ExperimentConfig, dataset: Dataset, seed: int, version: str) -> RunArtifacts:
    t_start = time.perf_counter()
    timings: dict[str, float] = {}
    stage = "data_preparation"
    try:
        t0 = time.perf_counter()
        split: SplitSet = split_three_way(dataset)
        timings[stage] = time.perf_counter() - t0

        stage = "hyperparameter_tuning"
        t0 = time.perf_counter()
        epochs = cfg.tuner.R if cfg.use_hpo else cfg.neural_epochs
        base = NeuralHyperparams(epochs=epochs)
        hps = {name: base for name in cfg.neural_models}
        tuning: dict[str, TuningResult] = {}
        hpo_latency = 0.0
        if cfg.use_hpo:
            for name in cfg.neural_models:
                hps[name], tuning[name] = tune_neural(
                    name, split.train, cfg.tuner, base, seed, cfg.taus, cfg.lr_bounds
                )
            # the tuned models are independent jobs and tune side by side
            hpo_latency = max((r.latency_s for r in tuning.values()), default=0.0)
        hpo_elapsed = time.perf_counter() - t0
        timings[stage] = hpo_elapsed

        stage = "ensemble_selection"
        t0 = time.perf_counter()
        stage2 = _fit_all(cfg, hps, split.train, seed)
        test_errors = compute_error_matrix(stage2, actuals_of(split.test), cfg.taus)
        timings[stage] = time.perf_counter() - t0

        stage = "final_training"
        t0 = time.perf_counter()
        history = split.train_plus_test
        final = _fit_all(cfg, hps, history, seed)
        val = actuals_of(split.validation)
        fit = fit_ensemble(test_errors, final, val, cfg.hopping_iterations, seed=seed, taus=cfg.taus)
        singles = {name: pooled_avg_wql(val, final[name], cfg.taus) for name in cfg.models}
        timings[stage] = time.perf_counter() - t0
    except Exception as exc:
        raise StageFailure(stage, exc) from exc

    elapsed = time.perf_counter() - t_start
    pipeline = elapsed - hpo_elapsed + hpo_latency
    record = ExperimentRecord(
        cfg.name, dataset.name, version, fit.validation_avg_wql, round(pipeline, 3), round(hpo_latency, 3)
    )
    return RunArtifacts(
        record=record,
        hyperparams={k: asdict(v) for k, v in hps.items()},
        tuning=tuning,
        test_errors=test_errors,
        single_model_validation=singles,
        ensemble=fit,
        stage_seconds=timings,
    )


def write_forecasts_csv(path, forecasts: Mapping[str, QuantileForecast]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item", "step", "tau", "value"])
        for item in sorted(forecasts):
            fc = forecasts[item]
            for step in range(fc.horizon):
                for qi, tau in enumerate(fc.taus):
                    w.writerow([item, step + 1, repr(tau), repr(float(fc.matrix[qi, step]))])


def read_forecasts_csv(path) -> dict[str, QuantileForecast]:
    rows: dict[str, dict[float, dict[int, float]]] = {}
    with Path(path).open(newline="") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(r["item"], {}).setdefault(float(r["tau"]), {})[int(r["step"])] = float(r["value"])
    out = {}
    for item, by_tau in rows.items():
        taus = tuple(sorted(by_tau))
        K = max(by_tau[taus[0]])
        out[item] = QuantileForecast(item, taus, np.array([[by_tau[t][s] for s in range(1, K + 1)] for t in taus]))
    return out


def _save_artifacts(run_dir: Path, art: RunArtifacts) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    write_forecasts_csv(run_dir / "forecasts.csv", art.ensemble.forecasts)
    (run_dir / "ensemble.json").write_text(art.ensemble.to_json() + "\n")
    summary = {
        "hyperparams": art.hyperparams,
        "single_model_validation_avg_wql": art.single_model_validation,
        "test_error_matrix": {
            "algorithms": list(art.test_errors.algorithms),
            "items": list(art.test_errors.items),
            "values": art.test_errors.values.tolist(),
        },
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (run_dir / "timings.json").write_text(json.dumps(art.stage_seconds, indent=2, sort_keys=True) + "\n")
    for name, result in art.tuning.items():
        path = run_dir / f"trials_{name}.csv"
        path.unlink(missing_ok=True)
        write_trial_log(path, result.trials)


def run_experiment(
    cfg: ExperimentConfig, dataset: Dataset | None = None, base_dir: Path | None = None
) -> tuple[list[ExperimentRecord], list[RunArtifacts | None]]:
    """Run every seed; a failing seed yields a NaN-error record and a failure
    note, and the sweep moves on."""
    dataset = dataset if dataset is not None else cfg.dataset.load(base_dir)
    out_dir = Path(cfg.output_dir) if cfg.output_dir else None
    if out_dir is not None and base_dir is not None and not out_dir.is_absolute():
        out_dir = base_dir / out_dir
    records, artifacts = [], []
    for i, seed in enumerate(cfg.seeds):
        version = version_label(i)
        run_dir = out_dir / cfg.name / dataset.name / version if out_dir else None
        try:
            art = run_once(cfg, dataset, seed, version)
            if run_dir is not None:
                _save_artifacts(run_dir, art)
            records.append(art.record)
            artifacts.append(art)
        except StageFailure as exc:
            log.error("%s/%s/%s: %s", cfg.name, dataset.name, version, exc)
            records.append(ExperimentRecord(cfg.name, dataset.name, version, math.nan, 0.0, 0.0, exc.stage))
            artifacts.append(None)
            if run_dir is not None:
                run_dir.mkdir(parents=True, exist_ok=True)
                (run_dir / "FAILED.txt").write_text(
                    f"stage: {exc.stage}\n"
                    + "".join(traceback.format_exception(type(exc.cause), exc.cause, exc.cause.__traceback__))
                )
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_records(out_dir / "records.csv", records)
    return records, artifacts
