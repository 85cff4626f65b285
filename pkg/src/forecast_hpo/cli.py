"""Command-line entry point: ingest | run | tune | analyze | report.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _schema(text: str | None):
    if not text:
        return None
    try:
        return dict(part.split("=", 1) for part in text.split(","))
    except ValueError:
        raise UsageError(f"bad --schema {text!r}; expected item_id=COL,timestamp=COL,target=COL") from None


def cmd_ingest(args) -> int:
    from .timeseries import ingest_long_csv, write_manifest

    csv_path = Path(args.csv)
    manifest = Path(args.manifest)
    ds = ingest_long_csv(
        csv_path,
        _schema(args.schema),
        name=args.name or csv_path.stem,
        horizon_k=args.horizon,
        seasonality_m=args.seasonality,
        freq=args.freq,
    )
    try:
        source = csv_path.resolve().relative_to(manifest.resolve().parent)
    except ValueError:
        source = csv_path.resolve()
    write_manifest(ds, source, manifest)
    print(f"dataset={ds.name} items={len(ds)} freq={ds.freq} horizon={ds.horizon_k} "
          f"seasonality={ds.seasonality_m} min_length={ds.min_length()} imputed={ds.imputed_points}")
    return EXIT_OK


def cmd_run(args) -> int:
    from dataclasses import replace

    from .pipeline import RECORD_COLUMNS, load_configs, run_experiment

    cfg_path = Path(args.config)
    configs = load_configs(cfg_path)
    out = Path(args.out).resolve()
    out.mkdir(parents=True, exist_ok=True)
    (out / "records.csv").unlink(missing_ok=True)  # each run command starts a fresh records file
    records = []
    for cfg in configs:
        if args.seeds:
            cfg = replace(cfg, seeds=tuple(args.seeds))
        cfg = replace(cfg, output_dir=str(out))
        recs, _ = run_experiment(cfg, base_dir=cfg_path.parent)
        records += recs
    print(",".join(RECORD_COLUMNS))
    for r in records:
        print(",".join(r.row()))
    failed = [r for r in records if not math.isfinite(r.error)]
    if failed:
        print(f"{len(failed)} of {len(records)} runs failed; see FAILED.txt files under {out}", file=sys.stderr)
    return EXIT_RUNTIME if failed and len(failed) == len(records) else EXIT_OK


def cmd_tune(args) -> int:
    from .hpo import TunerSettings, write_trial_log
    from .neural import NeuralHyperparams
    from .pipeline import tune_neural
    from .timeseries import load_manifest, split_three_way

    ds = load_manifest(args.manifest)
    settings = TunerSettings(args.strategy, args.jobs, args.parallel, args.R, args.eta, args.seed)
    split = split_three_way(ds)
    hp, result = tune_neural(args.model, split.train, settings, NeuralHyperparams(epochs=args.R), args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / f"trials_{args.model}.csv"
    log_path.unlink(missing_ok=True)
    write_trial_log(log_path, result.trials)
    (out / "tuner_settings.json").write_text(settings.to_json() + "\n")
    summary = {
        "model": args.model,
        "best_config": dict(result.best_config.values),
        "best_loss": result.best_loss,
        "n_trials": len(result.trials),
        "hpo_cost_s": round(result.cost_s, 3),
        "hpo_latency_s": round(result.latency_s, 3),
    }
    (out / "best_config.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _load_nonempty(path):
    from .pipeline import load_records

    records = load_records(path)
    if not records:
        raise UsageError(f"{path}: no records")
    return records


def _normalized_tables(args, records):
    from .analysis import aggregate, read_table6, strategy_table

    if args.normalized:
        return read_table6(args.normalized), None
    summaries = aggregate(records)
    return (
        strategy_table(summaries, args.strategy),
        strategy_table(summaries, args.strategy, dataset_means=True),
    )


def _write_analysis(args, records, out: Path) -> tuple:
    from .analysis import compare_strategies, crossover_theta, parse_theta_grid, theta_sweep, write_table6

    tables = {t.strip() for t in args.tables.split(",") if t.strip()}
    unknown = tables - {"6", "7"}
    if unknown:
        raise UsageError(f"unknown tables {sorted(unknown)}; choose from 6,7")
    table, alt = _normalized_tables(args, records)
    grid = theta_sweep(table, parse_theta_grid(args.theta_grid))
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "6" in tables:
        write_table6(out / "table6.csv", table, alt)
        written.append("table6.csv")
    if "7" in tables:
        grid.write_csv(out / "table7.csv")
        written.append("table7.csv")
    winners = grid.argmin
    cross = {"theta_grid": list(grid.thetas), "winner_first": winners[0], "winner_last": winners[-1],
             "switch_points": grid.switch_points(table)}
    if winners[0] != winners[-1]:
        cross["theta"] = crossover_theta(table, winners[0], winners[-1])
    (out / "crossover.json").write_text(json.dumps(cross, indent=2) + "\n")
    written.append("crossover.json")
    if records is not None and args.compare:
        a, b = args.compare.split(",")
        try:
            comparison = compare_strategies(records, a.strip(), b.strip())
        except ValueError as exc:
            comparison = {"error": str(exc)}
        (out / "strategy_comparison.json").write_text(json.dumps(comparison, indent=2) + "\n")
        written.append("strategy_comparison.json")
    return table, grid, written


def cmd_analyze(args) -> int:
    records = _load_nonempty(args.records) if args.records else None
    if records is None and not args.normalized:
        raise UsageError("analyze needs --records or --normalized")
    _, _, written = _write_analysis(args, records, Path(args.out))
    for name in written:
        print(Path(args.out) / name)
    return EXIT_OK


def cmd_report(args) -> int:
    from .plotting import plot_error_latency, plot_tradeoff

    records = _load_nonempty(args.records)
    out = Path(args.svg)
    table, grid, written = _write_analysis(args, records, out)
    plot_tradeoff(grid, table, out / "tradeoff.svg")
    plot_error_latency(table, out / "error_latency.svg")
    for name in written + ["tradeoff.svg", "error_latency.svg"]:
        print(out / name)
    return EXIT_OK


def _add_analysis_flags(p):
    p.add_argument("--tables", default="6,7", help="comma list of tables to emit (6 normalised, 7 trade-off)")
    p.add_argument("--theta-grid", default="0:1.56:0.04", help="start:stop:step (inclusive) or comma list")
    p.add_argument("--strategy", default="Hyperband", help="strategy whose configs form the trade-off table")
    p.add_argument("--compare", default="Hyperband,Bayesian", help="two strategies for strategy_comparison.json")
    p.add_argument("--normalized", help="use a ready normalised table CSV (config,error,latency)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="forecast-hpo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate a long-format CSV and write a dataset manifest")
    p.add_argument("--csv", required=True)
    p.add_argument("--manifest", required=True, help="output manifest JSON path")
    p.add_argument("--name")
    p.add_argument("--horizon", type=int, default=1, help="forecast horizon k")
    p.add_argument("--seasonality", type=int, help="season length m (default from frequency)")
    p.add_argument("--freq", choices=["hourly", "daily"], help="expected frequency (default inferred)")
    p.add_argument("--schema", help="column mapping item_id=COL,timestamp=COL,target=COL")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("run", help="run experiments from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=int, nargs="+", help="override the configured seeds")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("tune", help="tune one neural model on a dataset's training window")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", choices=["mq_lite", "deepar_lite"], default="mq_lite")
    p.add_argument("--strategy", choices=["hyperband", "bayesian", "random"], default="hyperband")
    p.add_argument("--jobs", type=int, default=15, help="max_training_jobs")
    p.add_argument("--parallel", type=int, default=5, help="max_parallel_jobs")
    p.add_argument("--R", type=int, default=27, help="max epochs per config")
    p.add_argument("--eta", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("analyze", help="normalised table, trade-off table, crossover and strategy comparison")
    p.add_argument("--records", help="records CSV (Experiment,Dataset,Version,Error,Pipeline,HPO)")
    p.add_argument("--out", default=".")
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="analysis outputs plus SVG figures")
    p.add_argument("--records", required=True)
    p.add_argument("--svg", required=True, help="output directory")
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, KeyError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"forecast-hpo {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # runtime failure
        print(f"forecast-hpo {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
