"""Render study artifacts into figures and delimited reports.

Everything here is read-only over a study directory produced by the
pipeline: ``results.json`` for final scores, ``trace_*.tsv`` for learning
curves, ``baseline_history.tsv`` for the supervised curve.  Figures are
written as PNG files next to a tab-separated and a plain-text version of
the system table, so the report can be consumed without a display.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .cflearn import read_trace
from .errors import ParseError
from .evaluation import ReportRow, experiment_report, format_report
from .pipeline import SYSTEMS, PipelineConfig, system_results

log = logging.getLogger(__name__)

#: Display order of the reweighting schedules (never == plain DPM+T).
SCHEDULE_ORDER = ("never", "once", "every-epoch", "every-validation", "every-minibatch")


def write_tsv_report(rows: list[ReportRow], path) -> None:
    with open(path, "w") as fh:
        fh.write("number\tsystem\tmean_f1\tstddev\tdelta\tbeats\n")
        for r in rows:
            beats = ",".join(str(b) for b in r.beats)
            fh.write(f"{r.number}\t{r.name}\t{r.mean:.6f}\t{r.stddev:.6f}\t"
                     f"{r.delta:.6f}\t{beats}\n")


def f1_bar_chart(rows: list[ReportRow], path) -> None:
    """Mean test F1 per system with a spread bar, baseline hatched."""
    fig, ax = plt.subplots(figsize=(7, 4))
    names = [r.name for r in rows]
    means = [r.mean * 100 for r in rows]
    errs = [r.stddev * 100 for r in rows]
    bars = ax.bar(names, means, yerr=errs, capsize=4, color="tab:blue")
    bars[0].set_color("tab:gray")
    bars[0].set_hatch("//")
    ax.set_ylabel("answer F1 (%)")
    ax.set_title("Test F1 by objective")
    ax.set_ylim(0, 100)
    for bar, mean in zip(bars, means):
        ax.annotate(f"{mean:.1f}", (bar.get_x() + bar.get_width() / 2, mean),
                    ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def learning_curves(traces: dict[str, list], path) -> None:
    """Validation F1 against update step for each counterfactual run."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, records in sorted(traces.items()):
        steps = [r.step for r in records if not np.isnan(r.dev_f1)]
        scores = [r.dev_f1 * 100 for r in records if not np.isnan(r.dev_f1)]
        if steps:
            ax.plot(steps, scores, marker=".", markersize=3, label=label)
    ax.set_xlabel("update")
    ax.set_ylabel("dev answer F1 (%)")
    ax.set_title("Counterfactual learning curves")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def baseline_curve(history_path, path) -> None:
    """Supervised loss and dev F1 over updates, two y-axes."""
    updates, losses, scores = [], [], []
    with open(history_path) as fh:
        header = fh.readline()
        if not header.startswith("update\t"):
            raise ParseError("expected baseline history header", str(history_path), 1)
        for line in fh:
            u, _epoch, loss, score = line.rstrip("\n").split("\t")
            updates.append(int(u))
            losses.append(float(loss))
            scores.append(float(score))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(updates, losses, color="tab:red", label="training loss")
    ax.set_xlabel("update")
    ax.set_ylabel("cross-entropy loss", color="tab:red")
    twin = ax.twinx()
    mask = ~np.isnan(scores)
    twin.plot(np.asarray(updates)[mask], np.asarray(scores)[mask] * 100,
              color="tab:blue", label="dev F1")
    twin.set_ylabel("dev answer F1 (%)", color="tab:blue")
    ax.set_title("Supervised baseline training")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def schedule_chart(schedules: dict[str, dict], path) -> None:
    """Mean F1 per reweighting schedule with run spread."""
    names = [n for n in SCHEDULE_ORDER if n in schedules and schedules[n]["f1"]]
    means = [float(np.mean(schedules[n]["f1"])) * 100 for n in names]
    errs = [float(np.std(schedules[n]["f1"])) * 100 for n in names]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(names, means, yerr=errs, capsize=4, color="tab:green")
    ax.set_ylabel("test answer F1 (%)")
    ax.set_title("Reweighting refresh schedules (token-level objective)")
    ax.set_ylim(0, 100)
    for x, mean in enumerate(means):
        ax.annotate(f"{mean:.1f}", (x, mean), ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def timing_histogram(seconds: list[float], path) -> None:
    """Annotation session durations, marking the ten-second reference line."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(seconds, bins=20, color="tab:purple")
    ax.axvline(10.0, color="black", linestyle="--", label="10 s")
    ax.set_xlabel("seconds per form")
    ax.set_ylabel("forms")
    ax.set_title("Feedback collection time per form")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_study(study_dir, cfg: PipelineConfig | None = None) -> list[Path]:
    """Produce report.txt/report.tsv and all applicable figures; returns the
    written paths."""
    study_dir = Path(study_dir)
    results = json.loads((study_dir / "results.json").read_text())
    n_seeds = max(len(results.get(name, {}).get("f1", [])) for name in SYSTEMS)
    iterations = cfg.significance_iterations if cfg else 10000
    rng_seed = cfg.significance_seed if cfg else 0
    alpha = cfg.alpha if cfg else 0.05
    systems = system_results(results, n_seeds)
    rows = experiment_report(systems, iterations=iterations,
                             rng_seed=rng_seed, alpha=alpha)
    figures = study_dir / "figures"
    figures.mkdir(exist_ok=True)
    written = []

    text_path = study_dir / "report.txt"
    text_path.write_text(format_report(rows) + "\n")
    written.append(text_path)
    tsv_path = study_dir / "report.tsv"
    write_tsv_report(rows, tsv_path)
    written.append(tsv_path)

    bars = figures / "f1_systems.png"
    f1_bar_chart(rows, bars)
    written.append(bars)

    traces = {}
    for name in SYSTEMS[1:]:
        trace_path = study_dir / f"trace_{name.replace('+', '-')}_s0.tsv"
        if trace_path.exists():
            traces[name] = read_trace(trace_path)
    if traces:
        curves = figures / "learning_curves.png"
        learning_curves(traces, curves)
        written.append(curves)

    history = study_dir / "baseline_history.tsv"
    if history.exists():
        base_fig = figures / "baseline_training.png"
        baseline_curve(history, base_fig)
        written.append(base_fig)

    if "schedules" in results:
        sched_fig = figures / "osl_schedules.png"
        schedule_chart(results["schedules"], sched_fig)
        written.append(sched_fig)

    timing = study_dir / "timing.json"
    if timing.exists():
        data = json.loads(timing.read_text())
        if data.get("seconds"):
            t_fig = figures / "feedback_timing.png"
            timing_histogram(data["seconds"], t_fig)
            written.append(t_fig)

    log.info("wrote %d report artifacts to %s", len(written), study_dir)
    return written
