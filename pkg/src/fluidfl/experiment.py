"""Experiment runner: builds seeded runs from a config, writes per-run CSV
metrics, a JSON summary, and the sweep tables.

Metrics files are byte-stable: floats are written with repr so a rerun with
the same config and seed reproduces the file exactly, and the summary can be
recomputed from the CSV without loss.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import Dataset, load_csv_dataset, partition_dataset, synth_gaussian_blobs
from .errors import ConfigError
from .invariance import invariant_fraction
from .nn import init_model
from .orchestrator import RoundRecord, Simulation, calibration_overhead

METRICS_COLUMNS = [
    "seed", "round", "strategy", "r", "stragglers", "round_time_s",
    "cumulative_time_s", "weighted_accuracy", "weighted_loss",
    "invariant_fraction", "thresholds", "calibration_overhead",
]

# rng stream tags for dataset generation and model init, per run seed
_DATA, _PARTITION, _MODEL = 4, 5, 6


def _fmt(x: float) -> str:
    return repr(float(x))


def build_dataset(config: ExperimentConfig, seed: int) -> Dataset:
    if config.csv_path:
        return load_csv_dataset(config.csv_path)
    return synth_gaussian_blobs(config.classes, config.dims, config.per_class,
                                seed=[seed, _DATA])


def build_run(config: ExperimentConfig, strategy: str, seed: int,
              forced_rate: float | None = None,
              policy: str | None = None) -> Simulation:
    """Assemble one seeded Simulation from a config."""
    dataset = build_dataset(config, seed)
    partition = partition_dataset(dataset, config.client_count,
                                  mode=config.partition_mode,
                                  alpha=config.alpha, seed=[seed, _PARTITION])
    layout = [dataset.features.shape[1], *config.hidden, dataset.class_count]
    model = init_model(layout, seed=[seed, _MODEL])
    settings = config.run_settings(strategy, seed, forced_rate, policy)
    return Simulation(model, dataset, partition, config.client_specs(), settings)


def record_to_row(record: RoundRecord, seed: int, strategy: str) -> list[str]:
    rates = ";".join(_fmt(record.rates[c]) for c in record.stragglers)
    return [
        str(seed), str(record.round), strategy, rates,
        ";".join(str(c) for c in record.stragglers),
        _fmt(record.round_time), _fmt(record.cumulative_time),
        _fmt(record.accuracy), _fmt(record.loss),
        _fmt(record.invariant_fraction),
        ";".join(_fmt(t) for t in record.thresholds),
        _fmt(calibration_overhead(record)),
    ]


def write_metrics(path: Path, rows: list[list[str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        writer.writerows(rows)


def sample_std(values) -> float:
    """Standard deviation over runs with the n-1 denominator; 0 for one run."""
    values = np.asarray(values, dtype=np.float64)
    if values.size <= 1:
        return 0.0
    return float(values.std(ddof=1))


def resolve_out_dir(config: ExperimentConfig, cli_out: str | None = None) -> Path:
    """CLI flag beats FLUID_OUT_DIR beats the config value."""
    if cli_out:
        return Path(cli_out)
    env = os.environ.get("FLUID_OUT_DIR")
    if env:
        return Path(env)
    return Path(config.out_dir)


def _rate_label(rate: float | None) -> str:
    return "auto" if rate is None else f"{rate:g}"


@dataclass
class ExperimentResult:
    summary: dict
    metrics_files: list[Path]
    results: dict  # (strategy, rate_label, seed) -> RunResult


def run_experiment(config: ExperimentConfig, out_dir: Path | None = None,
                   policy: str | None = None) -> ExperimentResult:
    """Run the config's strategy x rate grid over every seed.

    Writes one metrics CSV per run plus summary.json with the mean and
    sample-std of final weighted accuracy and total simulated time per
    (strategy, rate) group.
    """
    out = Path(out_dir) if out_dir is not None else resolve_out_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    rates: list[float | None] = list(config.forced_rates) or [None]
    groups = []
    files: list[Path] = []
    results: dict = {}
    for strategy in config.strategies:
        for rate in rates:
            label = _rate_label(rate)
            finals, totals = [], []
            for seed in config.seeds:
                run = build_run(config, strategy, seed, rate, policy).run()
                results[(strategy, label, seed)] = run
                rows = [record_to_row(rec, seed, strategy) for rec in run.records]
                path = out / f"metrics_{strategy}_r{label}_seed{seed}.csv"
                write_metrics(path, rows)
                files.append(path)
                finals.append(run.final_accuracy)
                totals.append(run.total_time)
            groups.append({
                "strategy": strategy,
                "rate": label,
                "seeds": list(config.seeds),
                "final_accuracies": finals,
                "mean_final_accuracy": float(np.mean(finals)),
                "std_final_accuracy": sample_std(finals),
                "total_times": totals,
                "mean_total_time": float(np.mean(totals)),
                "std_total_time": sample_std(totals),
            })
    summary = {"groups": groups}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return ExperimentResult(summary, files, results)


def sweep_threshold(config: ExperimentConfig, thresholds,
                    out_dir: Path | None = None) -> list[dict]:
    """Threshold sweep: fraction of invariant neurons and final accuracy.

    The fraction column counts, on a common baseline run's recorded score
    sets, the neurons scoring below each threshold, so it is exactly
    non-decreasing in th. Accuracy comes from separate runs with the
    threshold pinned (no init, no growth).
    """
    if len(config.strategies) != 1 or config.strategies[0] != "invariant":
        raise ConfigError("threshold sweep requires experiment.strategy = invariant")
    out = Path(out_dir) if out_dir is not None else resolve_out_dir(config)
    out.mkdir(parents=True, exist_ok=True)

    baseline_scores = []
    for seed in config.seeds:
        rate = config.forced_rates[0] if config.forced_rates else None
        run = build_run(config, "invariant", seed, rate).run()
        baseline_scores.extend(rec.scores for rec in run.records if rec.scores)

    table = []
    for th in sorted(float(t) for t in thresholds):
        fraction = float(np.mean([
            invariant_fraction(scores, th) for scores in baseline_scores
        ])) if baseline_scores else 0.0
        pinned = config.override(fixed_th=th)
        finals = []
        for seed in config.seeds:
            rate = config.forced_rates[0] if config.forced_rates else None
            finals.append(build_run(pinned, "invariant", seed, rate)
                          .run().final_accuracy)
        table.append({
            "threshold": th,
            "invariant_fraction": fraction,
            "mean_final_accuracy": float(np.mean(finals)),
            "std_final_accuracy": sample_std(finals),
        })

    path = out / "threshold_sweep.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "invariant_fraction",
                         "mean_final_accuracy", "std_final_accuracy"])
        for row in table:
            writer.writerow([_fmt(row["threshold"]),
                             _fmt(row["invariant_fraction"]),
                             _fmt(row["mean_final_accuracy"]),
                             _fmt(row["std_final_accuracy"])])
    (out / "threshold_sweep.json").write_text(
        json.dumps(table, indent=2, sort_keys=True))
    return table


def sweep_straggler_ratio(config: ExperimentConfig, ratios,
                          out_dir: Path | None = None) -> list[dict]:
    """Accuracy per straggler ratio per strategy, slowest-ratio policy."""
    for ratio in ratios:
        if not (0.0 < float(ratio) < 1.0):
            raise ConfigError(f"straggler ratio {ratio} outside (0, 1)")
    out = Path(out_dir) if out_dir is not None else resolve_out_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    table = []
    for ratio in sorted(float(r) for r in ratios):
        policy = f"slowest_pct:{ratio:g}"
        for strategy in config.strategies:
            rate = config.forced_rates[0] if config.forced_rates else None
            finals, totals = [], []
            for seed in config.seeds:
                run = build_run(config, strategy, seed, rate, policy).run()
                finals.append(run.final_accuracy)
                totals.append(run.total_time)
            table.append({
                "ratio": ratio,
                "strategy": strategy,
                "mean_final_accuracy": float(np.mean(finals)),
                "std_final_accuracy": sample_std(finals),
                "mean_total_time": float(np.mean(totals)),
            })
    path = out / "ratio_sweep.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ratio", "strategy", "mean_final_accuracy",
                         "std_final_accuracy", "mean_total_time"])
        for row in table:
            writer.writerow([_fmt(row["ratio"]), row["strategy"],
                             _fmt(row["mean_final_accuracy"]),
                             _fmt(row["std_final_accuracy"]),
                             _fmt(row["mean_total_time"])])
    (out / "ratio_sweep.json").write_text(json.dumps(table, indent=2,
                                                     sort_keys=True))
    return table
