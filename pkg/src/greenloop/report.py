"""Run reporting: frontier extraction, summary text, and figures.

Reads the artifacts a run writes (tradeoff.csv, events.ndjson, ledger.csv),
emits a Pareto frontier CSV plus a human-readable summary, and renders
matplotlib figures next to the delimited output.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import CorruptLogError, RejectedInputError
from .events import read_events, replay
from .orchestrator import TradeoffPoint, pareto_frontier

TRADEOFF_HEADER = ["cumulative_kg", "mean_accuracy", "labels_spent", "timestamp", "model_version"]


def write_tradeoff_csv(points: Sequence[TradeoffPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRADEOFF_HEADER)
        for p in points:
            writer.writerow([repr(p.cumulative_kg), repr(p.mean_accuracy),
                             p.labels_spent, p.timestamp, p.model_version])


def read_tradeoff_csv(path: str | Path) -> list[TradeoffPoint]:
    points: list[TradeoffPoint] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRADEOFF_HEADER:
            raise RejectedInputError(f"{path}: expected header {','.join(TRADEOFF_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                points.append(TradeoffPoint(
                    cumulative_kg=float(row[0]), mean_accuracy=float(row[1]),
                    labels_spent=int(row[2]), timestamp=int(row[3]),
                    model_version=int(row[4]),
                ))
            except (ValueError, IndexError):
                raise CorruptLogError(f"bad tradeoff row in {path}", lineno) from None
    return points


@dataclass
class ReportPaths:
    frontier_csv: Path
    summary_txt: Path
    figures: list[Path]


def _find_runs(run_dir: Path) -> list[Path]:
    """Run directories holding a tradeoff.csv, either run_dir itself or seed_*/."""
    if (run_dir / "tradeoff.csv").exists():
        return [run_dir]
    seeds = sorted(p for p in run_dir.glob("seed_*") if (p / "tradeoff.csv").exists())
    if not seeds:
        raise RejectedInputError(f"no tradeoff.csv under {run_dir}")
    return seeds


def _render_tradeoff_figure(curves: dict[str, list[TradeoffPoint]],
                            frontier: list[TradeoffPoint], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name, points in curves.items():
        ax.plot([p.cumulative_kg for p in points], [p.mean_accuracy for p in points],
                marker="o", markersize=2.5, linewidth=0.8, alpha=0.55, label=name)
    if frontier:
        ax.step([p.cumulative_kg for p in frontier], [p.mean_accuracy for p in frontier],
                where="post", color="black", linewidth=1.6, label="frontier")
    ax.set_xlabel("cumulative emissions (kg CO2e)")
    ax.set_ylabel("mean accuracy over seen tasks")
    ax.set_title("carbon / accuracy tradeoff")
    if len(curves) <= 8:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _render_carbon_timeline(curves: dict[str, list[TradeoffPoint]], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name, points in curves.items():
        ax.plot([p.timestamp for p in points], [p.cumulative_kg for p in points],
                drawstyle="steps-post", linewidth=1.0, label=name)
    ax.set_xlabel("slot")
    ax.set_ylabel("cumulative emissions (kg CO2e)")
    ax.set_title("emissions over time")
    if len(curves) <= 8:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def generate_report(run_dir: str | Path, out_dir: str | Path) -> ReportPaths:
    """Aggregate one run directory (or its seed_* children) into a report."""
    run_dir, out_dir = Path(run_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves: dict[str, list[TradeoffPoint]] = {}
    all_points: list[TradeoffPoint] = []
    summaries: list[str] = []
    for seed_dir in _find_runs(run_dir):
        name = seed_dir.name if seed_dir != run_dir else "run"
        points = read_tradeoff_csv(seed_dir / "tradeoff.csv")
        curves[name] = points
        all_points.extend(points)
        events_path = seed_dir / "events.ndjson"
        if events_path.exists():
            counters = replay(read_events(events_path))
            final = points[-1] if points else None
            summaries.append(
                f"{name}: final_accuracy={final.mean_accuracy:.4f} " if final else f"{name}: no points "
            )
            summaries[-1] += (
                f"total_kg={counters.cumulative_kg:.6g} "
                f"labels={sum(counters.labels_per_task.values())} "
                f"weak_labels={counters.weak_labels} "
                f"updates={counters.updates_committed} skipped={counters.updates_skipped} "
                f"deferred={counters.deferrals} halt={counters.halt_reason}"
            )
        elif points:
            final = points[-1]
            summaries.append(
                f"{name}: final_accuracy={final.mean_accuracy:.4f} "
                f"total_kg={final.cumulative_kg:.6g} labels={final.labels_spent}"
            )

    frontier = pareto_frontier(all_points)
    frontier_csv = out_dir / "frontier.csv"
    write_tradeoff_csv(frontier, frontier_csv)

    summary_txt = out_dir / "summary.txt"
    with open(summary_txt, "w") as fh:
        fh.write("greenloop run report\n")
        fh.write(f"source: {run_dir}\n")
        fh.write(f"tradeoff points: {len(all_points)}  frontier points: {len(frontier)}\n")
        for line in summaries:
            fh.write(line + "\n")

    figures = []
    if all_points:
        fig1 = out_dir / "tradeoff_curve.png"
        _render_tradeoff_figure(curves, frontier, fig1)
        figures.append(fig1)
        fig2 = out_dir / "carbon_timeline.png"
        _render_carbon_timeline(curves, fig2)
        figures.append(fig2)
    return ReportPaths(frontier_csv=frontier_csv, summary_txt=summary_txt, figures=figures)
