"""CSV tables and static SVG figures from control traces and validation metrics.

Figures are drawn on bare ``Figure`` objects (no pyplot state) with a fixed
SVG hash salt and no date stamp, so identical inputs give identical files.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .dataset import default_station_grid, default_tracker_grid

SVG_RC = {"svg.hashsalt": "formtwin", "svg.fonttype": "none"}
FLOAT = "%.6g"


def _f(v) -> str:
    return FLOAT % v


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


# ------------------------------------------------------------------- tables

SUMMARY_HEADER = ["run", "adapt", "applied_cycles", "terminated", "final_max_deviation_mm", "b_updates"]


def summary_rows(traces: dict) -> list:
    return [[name, "on" if t.adapt else "off", t.applied_count, t.terminated,
             _f(t.final_deviation), sum(r.b_updated for r in t.records)]
            for name, t in traces.items()]


def deformation_header(n_x: int) -> list:
    return ["run", "cycle", "kind"] + [f"tracker_{i}" for i in range(n_x)]


def deformation_rows(name: str, trace) -> list:
    """Measured snapshot before each applied cycle, the model's prediction of the
    next one, and the final measurement."""
    rows = []
    for r in trace.records:
        rows.append([name, r.cycle, "measured", *map(_f, r.measured)])
        rows.append([name, r.cycle + 1, "predicted", *map(_f, r.predicted_next)])
    if trace.records:
        rows.append([name, trace.records[-1].cycle + 1, "measured", *map(_f, trace.final_measured)])
    return rows


def toolpath_header(n_u: int) -> list:
    return ["run", "cycle"] + [f"station_{j}" for j in range(n_u)]


def toolpath_rows(name: str, trace) -> list:
    return [[name, r.cycle, *map(_f, r.applied_toolpath)] for r in trace.records]


def delta_b_header(p: int) -> list:
    return ["run", "lifted_index"] + [f"u_{j}" for j in range(p)]


def delta_b_rows(name: str, trace) -> list:
    """Accumulated change of ``B`` over the run, one row per lifted coordinate."""
    if not trace.b_increments:
        return []
    total = np.sum([np.asarray(d) for d in trace.b_increments], axis=0)
    return [[name, i, *map(_f, row)] for i, row in enumerate(total)]


VALIDATION_HEADER = ["tracker", "y_mm", "mae_mean", "mae_std", "mae_min", "mae_max"]


def validation_rows(metrics: dict) -> list:
    per = np.asarray(metrics["per_replicate_mae"], dtype=float)
    grid = metrics.get("tracker_grid") or default_tracker_grid(per.shape[1]).tolist()
    return [[i, _f(grid[i]), _f(per[:, i].mean()), _f(per[:, i].std()),
             _f(per[:, i].min()), _f(per[:, i].max())] for i in range(per.shape[1])]


# ------------------------------------------------------------------ figures

def _save(fig: Figure, path) -> Path:
    path = Path(path)
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def _grid_axes(fig: Figure, count: int):
    return fig.subplots(1, max(count, 1), squeeze=False, sharey=True)[0]


def plot_deformation(traces: dict, tracker_grid, path) -> Path:
    fig = Figure(figsize=(4.5 * max(len(traces), 1), 3.6))
    axes = _grid_axes(fig, len(traces))
    for ax, (name, t) in zip(axes, traces.items()):
        snaps = [r.measured for r in t.records] + [t.final_measured]
        for k, x in enumerate(snaps):
            ax.plot(tracker_grid, x, marker="o", ms=3, label=f"cycle {k}")
        ax.plot(tracker_grid, t.target, "k--", lw=1.5, label="target")
        ax.set_title(f"{name} (final {t.final_deviation:.2f} mm)")
        ax.set_xlabel("y [mm]")
        ax.legend(fontsize=7)
    axes[0].set_ylabel("deformation z [mm]")
    fig.tight_layout()
    return _save(fig, path)


def plot_toolpaths(traces: dict, station_grid, path) -> Path:
    fig = Figure(figsize=(4.5 * max(len(traces), 1), 3.6))
    axes = _grid_axes(fig, len(traces))
    for ax, (name, t) in zip(axes, traces.items()):
        for r in t.records:
            ax.plot(station_grid, r.applied_toolpath, label=f"cycle {r.cycle}")
        ax.axhline(0.0, color="0.6", lw=0.8)
        ax.set_title(name)
        ax.set_xlabel("y [mm]")
        if t.records:
            ax.legend(fontsize=7)
    axes[0].set_ylabel("toolpath z [mm]")
    fig.tight_layout()
    return _save(fig, path)


def plot_predicted_vs_true(example: dict, path) -> Path:
    """Overlay of decoded one-step predictions and measurements for one held-out episode."""
    grid = example["tracker_grid"]
    fig = Figure(figsize=(5.5, 3.8))
    ax = fig.subplots()
    colors = matplotlib.colormaps["viridis"](np.linspace(0, 0.9, max(len(example["true"]), 1)))
    for k, (xt, xp) in enumerate(zip(example["true"], example["predicted"])):
        ax.plot(grid, xt, "-", color=colors[k], label=f"cycle {k + 1} true")
        ax.plot(grid, xp, "--", color=colors[k], label=f"cycle {k + 1} predicted")
    ax.set_xlabel("y [mm]")
    ax.set_ylabel("deformation z [mm]")
    ax.set_title(f"held-out episode {example.get('episode_id', '')}")
    ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    return _save(fig, path)


# ------------------------------------------------------------------ driver

def render_report(out_dir, traces: dict, validation: dict | None = None,
                  tracker_grid=None, station_grid=None, p: int = 5) -> list[Path]:
    """Write every table and figure into ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    first = next(iter(traces.values()), None)
    n_x = len(first.target) if first is not None else len(default_tracker_grid())
    tracker_grid = list(tracker_grid) if tracker_grid is not None else default_tracker_grid(n_x).tolist()
    if station_grid is None:
        n_u = next((len(r.applied_toolpath) for t in traces.values() for r in t.records), None)
        station_grid = default_station_grid(n_u or len(default_station_grid())).tolist()
    station_grid = list(station_grid)
    if first is not None and first.b_increments:
        p = len(first.b_increments[0][0])

    written = [
        write_csv(out / "control_summary.csv", SUMMARY_HEADER, summary_rows(traces)),
        write_csv(out / "deformation.csv", deformation_header(n_x),
                  [row for name, t in traces.items() for row in deformation_rows(name, t)]),
        write_csv(out / "toolpaths.csv", toolpath_header(len(station_grid)),
                  [row for name, t in traces.items() for row in toolpath_rows(name, t)]),
        write_csv(out / "delta_b.csv", delta_b_header(p),
                  [row for name, t in traces.items() for row in delta_b_rows(name, t)]),
    ]
    if traces:
        written.append(plot_deformation(traces, tracker_grid, out / "deformation_vs_cycle.svg"))
        written.append(plot_toolpaths(traces, station_grid, out / "toolpaths_vs_cycle.svg"))
    if validation is not None:
        written.append(write_csv(out / "validation_mae.csv", VALIDATION_HEADER, validation_rows(validation)))
        if validation.get("example"):
            written.append(plot_predicted_vs_true(validation["example"], out / "predicted_vs_true.svg"))
    return written
