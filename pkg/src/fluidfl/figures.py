"""Render run and sweep figures to PNG files next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_run_figures(out_dir, results: dict) -> list[Path]:
    """Per-round accuracy, wall-time and invariant-fraction figures.

    results maps (strategy, rate_label, seed) -> RunResult, as produced by
    run_experiment.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panels = [
        ("accuracy", "weighted accuracy", lambda rec: rec.accuracy),
        ("round_time", "round wall-time (s)", lambda rec: rec.round_time),
        ("invariant_fraction", "invariant neuron fraction",
         lambda rec: rec.invariant_fraction),
    ]
    paths = []
    for name, ylabel, pick in panels:
        fig, ax = plt.subplots(figsize=(6, 4))
        for (strategy, rate, seed), run in sorted(results.items()):
            ys = [pick(rec) for rec in run.records]
            ax.plot(range(len(ys)), ys, alpha=0.8,
                    label=f"{strategy} r={rate} seed={seed}")
        ax.set_xlabel("round")
        ax.set_ylabel(ylabel)
        if len(results) <= 12:
            ax.legend(fontsize=7)
        fig.tight_layout()
        path = out / f"fig_{name}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def render_threshold_figure(out_dir, table: list[dict]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ths = [row["threshold"] for row in table]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ths, [row["invariant_fraction"] for row in table],
            marker="o", color="tab:blue", label="invariant fraction")
    ax.set_xlabel("drop threshold")
    ax.set_ylabel("invariant neuron fraction", color="tab:blue")
    twin = ax.twinx()
    twin.plot(ths, [row["mean_final_accuracy"] for row in table],
              marker="s", color="tab:red", label="final accuracy")
    twin.set_ylabel("mean final accuracy", color="tab:red")
    fig.tight_layout()
    path = out / "fig_threshold_sweep.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_ratio_figure(out_dir, table: list[dict]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    strategies = sorted({row["strategy"] for row in table})
    fig, ax = plt.subplots(figsize=(6, 4))
    for strategy in strategies:
        rows = sorted((r for r in table if r["strategy"] == strategy),
                      key=lambda r: r["ratio"])
        ax.errorbar([r["ratio"] for r in rows],
                    [r["mean_final_accuracy"] for r in rows],
                    yerr=[r["std_final_accuracy"] for r in rows],
                    marker="o", capsize=3, label=strategy)
    ax.set_xlabel("straggler ratio")
    ax.set_ylabel("mean final accuracy")
    ax.legend()
    fig.tight_layout()
    path = out / "fig_ratio_sweep.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
